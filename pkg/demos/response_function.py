"""
Quadratic response of a noisy four-spin cell
============================================

Feed random input models through a simulated noisy sampler, learn each one
exactly, and fit the learned parameters as a quadratic function of the
inputs. The square cell has couplers 304-308, 304-309, 305-308 and 305-309.
"""

from gibbsprobe.reproduce import four_spin_system
from gibbsprobe.response import leading_quadratic, simulate_response_pipeline

roster, noise = four_spin_system()
print("spins", roster.labels, "edges", roster.edges)

# 2000 input models keep this quick; the reference run uses 20000
rf, diag = simulate_response_pipeline(noise, roster, n_models=2000, seed=0)
print("fit residual rms", diag["residual_rms"])

# linear self-responses play the role of effective inverse temperatures
for key in roster.input_keys:
    print(roster.label(key), round(rf.linear(key, key), 2))

# the uncoupled pairs pick up negative quadratic responses
for pair in [(0, 2), (1, 3)]:
    print(roster.label(pair), [(roster.label(a), roster.label(b), round(v, 2))
                               for a, b, v in leading_quadratic(rf, pair, top=2)])
