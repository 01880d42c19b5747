"""Ready-made problem instances used by the experiment harness and the tests.

All data is embedded; the portfolio covariance/return block doubles as the
reference JSON fixture for the loadable-instance schema.
"""

import json

import numpy as np

from . import model

# -- bi-objective linear instance with a triangular feasible region ----------

def intro_biobjective(a=6.0, b=1.0, c=1.0, free=False):
    """min {x1, x2} over the triangle {a x1 + b x2 >= 0, b x1 + a x2 >= 0,
    x1 + x2 <= c}; requires a > b > 0 and c > 0.  With ``free`` the two
    objective vectors become parameters on the unit simplex (1'c_l = 1)."""
    if not (a > b > 0 and c > 0):
        raise model.ModelError("require a > b > 0 and c > 0")
    G = np.array([[-a, -b], [-b, -a], [1.0, 1.0]])
    h = np.array([0.0, 0.0, c])
    if free:
        space = model.ParamSpace(
            np.zeros(4), np.ones(4),
            norm_rows=np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]),
            norm_rhs=np.array([1.0, 1.0]),
        )
        mask = np.ones((2, 2), bool)
    else:
        space = model.ParamSpace(np.zeros(0), np.zeros(0))
        mask = np.zeros((2, 2), bool)
    return model.build_mlp(
        [[1.0, 0.0], [0.0, 1.0]], G, h, mask, space,
        name="intro-biobj", lb=[-np.inf, -np.inf],
    )


INTRO_THETA_TRUE = np.array([1.0, 0.0, 0.0, 1.0])


# -- tri-objective linear program with all nine coefficients free ------------

def mlp_triobjective():
    """min {-x1, -x2, -x3} over {x1+x2+x3 <= 5, x1+x2+3x3 <= 9, x >= 0};
    every objective coefficient is free in [-1, 0] under 1'c_l = -1."""
    norm = np.zeros((3, 9))
    for l in range(3):
        norm[l, 3 * l:3 * l + 3] = 1.0
    space = model.ParamSpace(-np.ones(9), np.zeros(9), norm, -np.ones(3))
    return model.build_mlp(
        [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
        [[1.0, 1.0, 1.0], [1.0, 1.0, 3.0]], [5.0, 9.0],
        np.ones((3, 3), bool), space, name="mlp-triobj",
    )


MLP_THETA_TRUE = np.array([-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0])

#: estimate reported for the identifiability run on the tri-objective instance
MLP_THETA_REPORTED = np.array([
    -0.3333, -0.3333, -0.3334,
    -0.3450, -0.3450, -0.3100,
    -0.1227, -0.1227, -0.7546,
])


# -- bi-objective quadratic instance ------------------------------------------

MQP_Q1 = np.array([[1.0, 0.0], [0.0, 2.0]])
MQP_Q2 = np.array([[2.0, 0.0], [0.0, 1.0]])
MQP_C1 = np.array([3.0, 1.0])
MQP_C2 = np.array([-6.0, -5.0])
# rows of A x >= b: A = [[-3, 1], [0, -1]]; stored below in <= orientation
MQP_B_TRUE = np.array([-6.0, -3.0])
_MQP_G = np.array([[3.0, -1.0], [0.0, 1.0]])


def mqp_rhs():
    """Right-hand side free in [-8, -1]^2 (theta carries the >=-oriented b)."""
    space = model.ParamSpace(np.array([-8.0, -8.0]), np.array([-1.0, -1.0]))
    return model.build_mqp(
        [MQP_Q1, MQP_Q2], [MQP_C1, MQP_C2], _MQP_G, -MQP_B_TRUE,
        mask=None, space=space, rhs_mask=[True, True], rhs_slot_coef=-1.0,
        name="mqp-rhs",
    )


def mqp_obj():
    """Both linear coefficient vectors free in [-10, 10]^4."""
    space = model.ParamSpace(np.full(4, -10.0), np.full(4, 10.0))
    return model.build_mqp(
        [MQP_Q1, MQP_Q2], [MQP_C1, MQP_C2], _MQP_G, -MQP_B_TRUE,
        mask=np.ones((2, 2), bool), space=space, name="mqp-obj",
    )


MQP_OBJ_THETA_TRUE = np.array([3.0, 1.0, -6.0, -5.0])


# -- mean-variance portfolio over eight securities ----------------------------

PORTFOLIO_RETURNS = np.array(
    [0.1791, 0.1143, 0.1357, 0.0837, 0.1653, 0.1808, 0.0352, 0.0368])

PORTFOLIO_COV = np.array([
    [0.1641, 0.0299, 0.0478, 0.0491, 0.0580, 0.0871, 0.0603, 0.0492],
    [0.0299, 0.0720, 0.0511, 0.0287, 0.0527, 0.0297, 0.0291, 0.0326],
    [0.0478, 0.0511, 0.0794, 0.0498, 0.0664, 0.0479, 0.0395, 0.0523],
    [0.0491, 0.0287, 0.0498, 0.1148, 0.0336, 0.0503, 0.0326, 0.0447],
    [0.0580, 0.0527, 0.0664, 0.0336, 0.1073, 0.0483, 0.0402, 0.0533],
    [0.0871, 0.0297, 0.0479, 0.0503, 0.0483, 0.1134, 0.0591, 0.0387],
    [0.0603, 0.0291, 0.0395, 0.0326, 0.0402, 0.0591, 0.0704, 0.0244],
    [0.0492, 0.0326, 0.0523, 0.0447, 0.0533, 0.0387, 0.0244, 0.1028],
])


def portfolio(upper=1.0, n_free=5):
    """Return/risk trade-off: f1 = -r'x, f2 = x'Qx over the capped simplex
    {0 <= x <= upper, 1'x = 1}.  The first ``n_free`` returns are free (their
    slots carry the f1 coefficients, theta = -r in [-1, 0]); the remaining
    returns are known.  At least some fixed entries are needed for the returns
    to be identifiable: shifting every return by the same constant changes the
    weighted objective by a constant on the simplex, so an all-free return
    vector is recoverable only up to that shift.  The box caps expected
    returns at 30%: far above it the anchored assets drop out of every
    efficient portfolio and the loss surface flattens out."""
    n = 8
    mask = np.vstack([np.arange(n) < n_free, np.zeros(n, bool)])
    space = model.ParamSpace(np.full(n_free, -0.3), np.zeros(n_free))
    return model.build_mqp(
        [np.zeros((n, n)), 2.0 * PORTFOLIO_COV],
        [-PORTFOLIO_RETURNS, np.zeros(n)],
        np.zeros((0, n)), np.zeros(0),
        mask=mask,
        space=space, lb=np.zeros(n), ub=np.full(n, upper),
        E=np.ones((1, n)), e=np.ones(1), name="portfolio",
    )


PORTFOLIO_THETA_TRUE = -PORTFOLIO_RETURNS[:5]  # slot values are c1 entries


def portfolio_json():
    """The portfolio instance in the loadable-document schema."""
    return portfolio().to_json()


# -- six-node traffic network --------------------------------------------------

TRAFFIC_LINKS = ((1, 3), (2, 4), (1, 5), (5, 6), (2, 5), (6, 3), (6, 4))
TRAFFIC_T0 = np.array([8.0, 9.0, 2.0, 6.0, 3.0, 3.0, 4.0])
TRAFFIC_CAP = np.array([2000.0, 2000.0, 2000.0, 4000.0, 2000.0, 2500.0, 2500.0])
TRAFFIC_EMIS = np.array([8.0, 9.0, 2.0, 6.0, 3.0, 3.0, 4.0])
TRAFFIC_DEMANDS_TRUE = np.array([2500.0, 3500.0])


def six_node_network():
    return model.TrafficNetwork(
        links=TRAFFIC_LINKS, free_flow=TRAFFIC_T0, capacity=TRAFFIC_CAP,
        emission_factor=TRAFFIC_EMIS, od_pairs=((1, 3), (2, 4)),
        demands=TRAFFIC_DEMANDS_TRUE,
    )


def traffic():
    """Both O-D demands free in [1000, 10000] vehicles/hour."""
    space = model.ParamSpace(np.array([1000.0, 1000.0]), np.array([10000.0, 10000.0]))
    return model.build_traffic(six_node_network(), [True, True], space, name="traffic")


FIXTURE_BUILDERS = {
    "intro-biobj": lambda: (intro_biobjective(free=True), INTRO_THETA_TRUE),
    "mlp-triobj": lambda: (mlp_triobjective(), MLP_THETA_TRUE),
    "mqp-rhs": lambda: (mqp_rhs(), MQP_B_TRUE),
    "mqp-obj": lambda: (mqp_obj(), MQP_OBJ_THETA_TRUE),
    "portfolio": lambda: (portfolio(), PORTFOLIO_THETA_TRUE),
    "traffic": lambda: (traffic(), TRAFFIC_DEMANDS_TRUE),
}


def fixture(fixture_id):
    """(instance, theta_true) for a named fixture."""
    try:
        builder = FIXTURE_BUILDERS[fixture_id]
    except KeyError:
        raise model.ModelError("unknown fixture %r (have: %s)"
                               % (fixture_id, ", ".join(sorted(FIXTURE_BUILDERS))))
    return builder()
