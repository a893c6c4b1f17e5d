import numpy as np

from tgslope.experiments import SimulationSpec, default_lambda, gen_design, gen_response, gen_truth, make_problem
from tgslope.linalg import Rng


def instance(seed, n=60, p=30, p1=3, p2=3, k=2, s=4, design="gaussian", sigma=1.0, q=0.1, lam="chi"):
    """Synthetic problem plus its ground truth and design."""
    spec = SimulationSpec(n=n, p=p, p1=p1, p2=p2, k_rank=k, s=s, design=design, sigma=sigma, q=q)
    rng = Rng(seed)
    x = gen_design(spec, rng)
    truth = gen_truth(spec, rng)
    y = gen_response(truth, x, sigma, rng)
    if lam == "chi":
        lam = default_lambda(spec) if sigma > 0 else default_lambda(SimulationSpec(**{**spec.key(), "sigma": 1.0}))
    elif lam == "zero":
        lam = np.zeros(p)
    return make_problem(x, y, k, lam), truth, x, y


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
