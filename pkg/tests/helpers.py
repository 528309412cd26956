"""Small random dispatch instances shared by the solver tests."""
import numpy as np

from pvdr.dispatch.problem import DispatchProblem


def random_problem(rng, n_units=2, n_steps=8, equal=True, switch_cost=0.0, n_pv=1,
                   p_min=None, p_max=None):
    """Feasible-looking instance with a midday PV surplus and random draws."""
    rating = np.full(n_units, 4.5) if equal else rng.choice([3.0, 4.5, 6.0], n_units)
    soc_max = np.full(n_units, 10.0)
    soc0 = rng.uniform(2.0, 7.0, n_units)
    draws = rng.uniform(0.0, 0.8, (n_units, n_steps)) * (rng.random((n_units, n_steps)) < 0.5)
    spot = rng.uniform(0.02, 0.12, n_steps)
    load = rng.uniform(2.0, 8.0, n_steps)
    shape = np.sin(np.linspace(0.2, np.pi - 0.2, n_steps))
    pv = rng.uniform(0.5, 1.0, (n_pv, 1)) * shape[None, :] * rng.uniform(6.0, 20.0)
    return DispatchProblem(
        spot=spot, load=load, pv=pv, rating=rating, draws=draws, soc0=soc0, soc_max=soc_max,
        soc_terminal=np.minimum(soc0, rng.uniform(0.0, 3.0, n_units)),
        p_min=-rng.uniform(0.0, 6.0) if p_min is None else p_min,
        p_max=60.0 if p_max is None else p_max, dt=1 / 6, switch_cost=switch_cost,
        b_init=rng.integers(0, 2, n_units))
