import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wsobolev._expr import ExpressionError, evaluate_expression
from wsobolev.config import ConfigError, load_config, parse_config

BASE = {"weight": {"beta": 1.0, "q": 2.0, "dim": 1}}


class TestExpressionEvaluator:
    def test_polynomial(self):
        x = np.linspace(-2, 2, 9)
        assert_allclose(evaluate_expression("x**2 - 3*x + 1", x), x**2 - 3 * x + 1)

    def test_functions_and_constants(self):
        x = np.array([0.5, 1.5])
        assert_allclose(
            evaluate_expression("exp(-x*x) * cos(pi * x)", x),
            np.exp(-x * x) * np.cos(np.pi * x),
        )

    def test_max_min_two_args(self):
        x = np.linspace(-2, 2, 21)
        assert_allclose(
            evaluate_expression("max(1 - abs(x), 0)", x),
            np.maximum(1 - np.abs(x), 0),
        )
        assert_allclose(evaluate_expression("min(x, 0.5)", x), np.minimum(x, 0.5))

    def test_two_variables(self):
        x = np.array([1.0, 2.0])
        y = np.array([3.0, 5.0])
        assert_allclose(evaluate_expression("x*y + y", x, y), x * y + y)

    def test_scalar_broadcast(self):
        x = np.linspace(-1, 1, 5)
        assert_allclose(evaluate_expression("2.5", x), np.full(5, 2.5))

    def test_unary_and_mod(self):
        x = np.array([3.0, -4.0])
        assert_allclose(evaluate_expression("-x % 5", x), (-x) % 5)

    def test_unknown_name(self):
        with pytest.raises(ExpressionError, match="unknown name"):
            evaluate_expression("x + z", np.zeros(3))

    def test_y_unavailable_in_1d(self):
        with pytest.raises(ExpressionError, match="unknown name"):
            evaluate_expression("x + y", np.zeros(3))

    def test_no_attribute_access(self):
        with pytest.raises(ExpressionError):
            evaluate_expression("x.__class__", np.zeros(3))

    def test_no_arbitrary_calls(self):
        with pytest.raises(ExpressionError):
            evaluate_expression("__import__('os')", np.zeros(3))
        with pytest.raises(ExpressionError):
            evaluate_expression("eval('1')", np.zeros(3))

    def test_no_keyword_arguments(self):
        with pytest.raises(ExpressionError, match="keyword"):
            evaluate_expression("max(x, x=1)", np.zeros(3))

    def test_parse_error(self):
        with pytest.raises(ExpressionError, match="cannot parse"):
            evaluate_expression("x +", np.zeros(3))

    def test_string_literal_rejected(self):
        with pytest.raises(ExpressionError):
            evaluate_expression("'abc'", np.zeros(3))


class TestConfigDefaults:
    def test_minimal_config(self):
        cfg = parse_config(dict(BASE))
        assert cfg.weight.beta == 1.0
        assert cfg.grid.half_width == 6.0
        assert cfg.grid.nodes_per_axis == 301
        assert cfg.p == 2.0
        assert cfg.seed == 42
        assert cfg.fit_half_width == 6.0
        assert cfg.constants.eps == 1.0
        assert cfg.constants.eps0 is None
        assert cfg.constants.L == 4.0
        assert len(cfg.balls) == 2
        assert cfg.balls[0].center == (0.0,)
        assert cfg.approximate.schedule == (0.2, 0.1, 0.05)
        assert cfg.evolution.T == 0.5
        assert cfg.evolution.dualization == "weighted"
        assert cfg.stationary.source == "2*x"
        # plain descent without the prox regularizer gets a bigger budget
        assert cfg.stationary.solver.max_iterations == 100_000
        assert cfg.evolution.solver.max_iterations == 10_000
        assert cfg.verify_override is None

    def test_full_round_trip(self):
        doc = {
            "weight": {
                "beta": 2.0,
                "q": 3.0,
                "dim": 1,
                "W": [{"kind": "power_abs", "c": 0.5, "s": 2.0}],
                "V": [{"kind": "cosine", "c": 1.0, "k": [2.0]}],
            },
            "grid": {"half_width": 4.0, "nodes_per_axis": 201},
            "p": 3.0,
            "seed": 7,
            "fit": {"half_width": 3.0, "n_samples": 501},
            "constants": {"eps": 0.5, "eps0": 0.25, "eps1": 2.0, "L": 8.0, "C4": 2.0},
            "balls": [{"center": 0.0, "radius": 1.5}],
            "approximate": {"u0": "max(1 - abs(x), 0)", "support_radius": 1.0,
                            "schedule": [0.1, 0.05], "tol": 0.05},
            "evolution": {"u0": "sin(x)", "T": 0.2, "tau": 0.01,
                          "dualization": "lebesgue",
                          "solver": {"tol": 1e-6, "max_iters": 500}},
            "stationary": {"source": "x", "compatibility_tol": 1e-4,
                           "solver": {"max_iters": 2000}},
            "verify": {"C": 1.0, "D": 2.0},
        }
        cfg = parse_config(doc)
        assert cfg.weight.q == 3.0
        assert not cfg.weight.W.is_zero()
        assert cfg.grid.nodes_per_axis == 201
        assert cfg.p == 3.0
        assert cfg.seed == 7
        assert cfg.fit_half_width == 3.0
        assert cfg.fit_samples == 501
        assert cfg.constants.eps0 == 0.25
        assert cfg.balls[0].radius == 1.5
        assert cfg.approximate.schedule == (0.1, 0.05)
        assert cfg.evolution.dualization == "lebesgue"
        assert cfg.evolution.solver.tolerance == 1e-6
        assert cfg.evolution.solver.max_iterations == 500
        assert cfg.stationary.solver.max_iterations == 2000
        assert cfg.verify_override == {"C": 1.0, "D": 2.0}

    def test_2d_weight(self):
        cfg = parse_config({"weight": {"beta": 1.0, "q": 2.0, "dim": 2}})
        assert cfg.grid.dim == 2
        assert cfg.balls[0].center == (0.0, 0.0)


class TestConfigErrors:
    def test_missing_weight(self):
        with pytest.raises(ConfigError, match="weight: required"):
            parse_config({})

    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config({**BASE, "wieght": {}})

    def test_beta_zero(self):
        with pytest.raises(ConfigError, match="beta"):
            parse_config({"weight": {"beta": 0.0, "q": 2.0, "dim": 1}})

    def test_q_at_most_one(self):
        with pytest.raises(ConfigError, match="weight.q"):
            parse_config({"weight": {"beta": 1.0, "q": 1.0, "dim": 1}})

    def test_bad_dim(self):
        with pytest.raises(ConfigError, match="dim"):
            parse_config({"weight": {"beta": 1.0, "q": 2.0, "dim": 3}})

    def test_unknown_term_kind(self):
        with pytest.raises(ConfigError, match="weight.W"):
            parse_config({"weight": {"beta": 1.0, "q": 2.0, "dim": 1,
                                     "W": [{"kind": "spline"}]}})

    def test_even_grid(self):
        with pytest.raises(ConfigError, match="odd"):
            parse_config({**BASE, "grid": {"nodes_per_axis": 300}})

    def test_schedule_not_decreasing(self):
        with pytest.raises(ConfigError, match="decreasing"):
            parse_config({**BASE, "approximate": {"schedule": [0.1, 0.2]}})

    def test_schedule_not_positive(self):
        with pytest.raises(ConfigError, match="positive"):
            parse_config({**BASE, "approximate": {"schedule": [0.1, 0.0]}})

    def test_ball_center_dimension(self):
        with pytest.raises(ConfigError, match="coordinates"):
            parse_config({**BASE, "balls": [{"center": [1.0, 2.0], "radius": 1.0}]})
        doc2d = {"weight": {"beta": 1.0, "q": 2.0, "dim": 2},
                 "balls": [{"center": 1.0, "radius": 1.0}]}
        with pytest.raises(ConfigError, match="coordinates"):
            parse_config(doc2d)

    def test_ball_missing_center(self):
        with pytest.raises(ConfigError, match="center"):
            parse_config({**BASE, "balls": [{"radius": 1.0}]})

    def test_empty_balls(self):
        with pytest.raises(ConfigError, match="non-empty"):
            parse_config({**BASE, "balls": []})

    def test_bad_dualization(self):
        with pytest.raises(ConfigError, match="dualization"):
            parse_config({**BASE, "evolution": {"dualization": "primal"}})

    def test_solver_unknown_key(self):
        with pytest.raises(ConfigError, match="evolution.solver"):
            parse_config({**BASE, "evolution": {"solver": {"tolerance": 1e-8}}})

    def test_empty_verify_block(self):
        with pytest.raises(ConfigError, match="verify"):
            parse_config({**BASE, "verify": {}})

    def test_verify_unknown_constant(self):
        with pytest.raises(ConfigError, match="verify"):
            parse_config({**BASE, "verify": {"C5": 1.0}})

    def test_type_errors_have_paths(self):
        with pytest.raises(ConfigError, match="grid.half_width"):
            parse_config({**BASE, "grid": {"half_width": "wide"}})
        with pytest.raises(ConfigError, match="seed"):
            parse_config({**BASE, "seed": -1})


class TestLoadConfig:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"weight": {"beta": 1.0, "q": 2.0, "dim": 1}}))
        cfg = load_config(path)
        assert cfg.weight.q == 2.0

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.json")
