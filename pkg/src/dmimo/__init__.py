"""Dynamic resource allocation for distributed-MIMO LEO satellite uplinks.

Library layout:
  config     -- system parameters, constants, Rician-factor table
  scenario   -- link budgets, geometry, pilots, satellite selection
  channel    -- Rician channel model and sampling
  estimation -- MMSE channel estimation under pilot contamination
  rate       -- closed-form SINR/rate lower bound and Monte Carlo oracles
  scheduler  -- conflict-graph sub-band scheduling
  gp         -- geometric-programming solver layer
  optimizer  -- SCA power/weight control, bandwidth water-filling, outer loop
  harness    -- seeded experiments, CSV/plot-script output, CLI
"""

__version__ = "0.1.0"
