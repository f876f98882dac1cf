"""Loop Chern-Simons invariants of circle actions on odd-dimensional Riemannian manifolds."""

from .curvature import MetricField, christoffel, curvature_batch, riemann
from .errors import LoopCSError
from .geometry import DEFAULT_ENGINE, Chart, DerivativeEngine, SmoothMap
from .homotopy import Homotopy, d_pullback_formula, d_pullback_reduced, stokes_check
from .ktensor import build_k, k_field
from .loops import CircleAction, Loop, csw_eval, invariant_I, iterate_action
from .quadrature import QuadratureGrid, grid_for_chart, integrate, parallel_map
from .zoo import make_berger_s5, make_flat_torus, make_lens, make_round_sphere, zoo_entry

__version__ = "0.1.0"
