"""Where do virtual samples land?  Radii of spherical and ellipsoidal noise."""
import numpy as np

from ibm2.features import FeatureDataset
from ibm2.noise import RangeVector, VirtualSetSpec, annulus_stats

# one point at the origin, so a virtual sample's norm is its noise radius
for d in (2, 16, 128, 2048):
    origin = FeatureDataset(np.zeros((1, d)), [0], 1)
    spec = VirtualSetSpec(origin, 1.0, 2000, RangeVector(np.ones(d), "spherical"), seed=0)
    st = annulus_stats(spec, 2000)
    print(f"d={d:5d}  sqrt(d)={np.sqrt(d):7.2f}  mean radius={st['mean_radius']:7.2f}  "
          f"relative spread={st['std_radius'] / st['mean_radius']:.3f}")

# the shell gets thin as d grows; a range vector stretches it into an ellipsoid
d = 512
s = np.geomspace(0.1, 3.0, d)
origin = FeatureDataset(np.zeros((1, d)), [0], 1)
spec = VirtualSetSpec(origin, 0.5, 2000, RangeVector(s, "ellipsoidal"), seed=1)
st = annulus_stats(spec, 2000)
print(f"ellipsoidal: mean squared radius {st['mean_sq_radius']:.1f}, eps^2 * |s|^2 = {0.25 * s @ s:.1f}")
