"""Numerical knobs shared across the package.

Every tolerance lives here so tests and the CLI override one place.
"""

# relative tolerance for reconstructing ambient points from lattice coordinates
RECON_TOL = 1e-9

# membership tolerance in the flat torus metric (lattice coordinates mod 1)
MEMBERSHIP_TOL = 1e-6

# growth factor across the last three radii for the unboundedness probe
GROWTH_FACTOR = 1.5

# scale applied to sample differences in the integer-relation lattice
RELATION_SCALE = 10**6

# greedy peeling stops after this many components
MAX_COMPONENTS = 8

# resource guard for exhaustive lattice enumeration
ENUMERATION_LIMIT = 10**8

# default search bound for the finite part of a stabilizer
TORSION_BOUND = 12

# linear independence threshold: |det| > INDEPENDENCE_TOL * prod(norms)
INDEPENDENCE_TOL = 1e-9
