"""Weight sharing layouts: parameter counting, expansion, serialization."""

import numpy as np
import pytest

from ldpcboost import Quantizer, Stage, WeightSet
from ldpcboost.weights import WeightShapeError


def _randomize(ws, seed=0):
    rng = np.random.default_rng(seed)
    for st in ws.stages:
        for a in st.param_arrays():
            a[...] = rng.uniform(0.2, 1.8, a.shape)
    return ws


class TestParamCounts:
    """Free parameter counts over the 24-VN / 88-edge protograph."""

    @pytest.mark.parametrize("mode,expected", [
        ("full", (24 + 88) * 30),       # 3360
        ("spatial", 2 * 30),            # 60
        ("temporal", 24 + 88),          # 112
        ("dynamic", 3 * 30),            # 90
        ("dynamic_proto", (24 + 2 * 6) * 30),
    ])
    def test_single_stage(self, wimax, mode, expected):
        ws = WeightSet.all_ones(wimax, [(30, mode)])
        assert ws.param_count == expected

    def test_two_stage_memory(self, wimax):
        # 20 spatial iterations + 30 dynamic iterations
        ws = WeightSet.all_ones(wimax, [(20, "spatial"), (30, "dynamic")])
        assert ws.param_count == 2 * 20 + 3 * 30 == 130
        assert ws.total_iters == 50
        assert ws.stage_lengths == (20, 30)
        assert ws.stage_start(0) == 0 and ws.stage_start(1) == 20

    def test_alist_graph_counts_per_node(self, toy):
        import oracles
        from ldpcboost import parse_alist
        H = oracles.dense_from_graph(toy)
        g = parse_alist("\n".join([
            f"{toy.num_vns} {toy.num_cns}",
            "2 3",
            " ".join(str(int(d)) for d in toy.vn_degrees),
            " ".join(str(int(d)) for d in toy.cn_degrees),
        ] + [" ".join(str(c + 1) for c in np.nonzero(H[:, v])[0]) for v in range(toy.num_vns)]
          + [" ".join(str(v + 1) for v in np.nonzero(H[c])[0]) for c in range(toy.num_cns)]))
        # without a protograph every node is its own prototype
        ws = WeightSet.all_ones(g, [(4, "full")])
        assert ws.param_count == (g.num_vns + g.num_edges) * 4


class TestMaterialize:
    def test_shapes(self, wimax):
        ws = WeightSet.all_ones(wimax, [(3, "spatial"), (2, "dynamic")])
        chw, cw_sat, cw_unsat = ws.materialize(wimax)
        assert chw.shape == (5, wimax.num_vns)
        assert cw_sat.shape == (5, wimax.num_edges)
        assert cw_unsat.shape == (5, wimax.num_edges)

    def test_all_ones_everywhere(self, wimax):
        ws = WeightSet.min_sum(wimax, 4)
        for arr in ws.materialize(wimax):
            assert np.all(arr == 1.0)
        assert ws.is_all_ones()

    def test_weighted_min_sum_values(self, wimax):
        ws = WeightSet.weighted_min_sum(wimax, 4, 0.75)
        chw, cw_sat, cw_unsat = ws.materialize(wimax)
        assert np.all(chw == 1.0)
        assert np.all(cw_sat == 0.75)
        assert np.all(cw_unsat == 0.75)

    def test_spatial_broadcast(self, toy):
        ws = WeightSet.all_ones(toy, [(2, "spatial")])
        ws.stages[0].chw[:] = [0.5, 0.7]
        ws.stages[0].cw[:] = [0.9, 1.1]
        chw, cw_sat, cw_unsat = ws.materialize(toy)
        assert np.all(chw[0] == 0.5) and np.all(chw[1] == 0.7)
        assert np.all(cw_sat[0] == 0.9) and np.all(cw_sat[1] == 1.1)
        np.testing.assert_array_equal(cw_sat, cw_unsat)

    def test_dynamic_unsat_differs(self, toy):
        ws = WeightSet.all_ones(toy, [(1, "dynamic")])
        ws.stages[0].cw[:] = 0.8
        ws.stages[0].ucw[:] = 0.3
        _, cw_sat, cw_unsat = ws.materialize(toy)
        assert np.all(cw_sat == 0.8) and np.all(cw_unsat == 0.3)

    def test_full_mode_proto_expansion(self, toy):
        ws = WeightSet.all_ones(toy, [(1, "full")])
        ws.stages[0].chw[0] = [1.0, 2.0, 3.0, 4.0]
        ws.stages[0].cw[0] = np.arange(6, dtype=float)
        chw, cw_sat, _ = ws.materialize(toy)
        # z = 3: each proto value repeats for three lifted nodes
        np.testing.assert_array_equal(chw[0], np.repeat([1.0, 2.0, 3.0, 4.0], 3))
        np.testing.assert_array_equal(cw_sat[0], np.repeat(np.arange(6.0), 3))

    def test_temporal_shared_across_iterations(self, toy):
        ws = WeightSet.all_ones(toy, [(3, "temporal")])
        ws.stages[0].chw[:] = np.linspace(0.5, 1.5, 4)
        chw, _, _ = ws.materialize(toy)
        np.testing.assert_array_equal(chw[0], chw[1])
        np.testing.assert_array_equal(chw[0], chw[2])

    def test_dynamic_proto_cn_indexing(self, toy):
        ws = WeightSet.all_ones(toy, [(1, "dynamic_proto")])
        ws.stages[0].cw[0] = [0.25, 0.5]
        ws.stages[0].ucw[0] = [1.25, 1.5]
        _, cw_sat, cw_unsat = ws.materialize(toy)
        cp = toy.cn_proto[toy.edge_cn]
        np.testing.assert_array_equal(cw_sat[0], np.where(cp == 0, 0.25, 0.5))
        np.testing.assert_array_equal(cw_unsat[0], np.where(cp == 0, 1.25, 1.5))

    def test_truncation_and_overrun(self, toy):
        ws = WeightSet.all_ones(toy, [(2, "spatial"), (2, "dynamic")])
        chw, _, _ = ws.materialize(toy, 3)
        assert chw.shape[0] == 3
        with pytest.raises(WeightShapeError):
            ws.materialize(toy, 5)

    def test_wrong_graph_rejected(self, toy, wimax):
        ws = WeightSet.all_ones(wimax, [(2, "full")])
        with pytest.raises(WeightShapeError):
            ws.materialize(toy)


class TestStageValidation:
    def test_mode_spelling(self):
        with pytest.raises(WeightShapeError):
            Stage(2, "spatia1", np.ones(2), np.ones(2))

    def test_ucw_only_for_dynamic_modes(self):
        with pytest.raises(WeightShapeError):
            Stage(2, "spatial", np.ones(2), np.ones(2), np.ones(2))
        with pytest.raises(WeightShapeError):
            Stage(2, "dynamic", np.ones(2), np.ones(2))

    def test_at_least_one_iteration(self):
        with pytest.raises(WeightShapeError):
            Stage(0, "spatial", np.ones(0), np.ones(0))

    def test_empty_weight_set(self):
        with pytest.raises(WeightShapeError):
            WeightSet("x", [])


class TestDecoderKind:
    def test_classification(self, wimax):
        assert WeightSet.min_sum(wimax, 5).decoder_kind() == "ms"
        assert WeightSet.weighted_min_sum(wimax, 5, 0.75).decoder_kind() == "wms"
        ws = _randomize(WeightSet.all_ones(wimax, [(5, "dynamic")]))
        assert ws.decoder_kind() == "nms"
        # spatially constant but not unit channel weights is still general
        ws2 = WeightSet.weighted_min_sum(wimax, 5, 0.75)
        ws2.stages[0].chw[:] = 0.9
        assert ws2.decoder_kind() == "nms"


class TestSerialization:
    @pytest.mark.parametrize("stages", [
        [(4, "spatial")],
        [(3, "temporal")],
        [(2, "full")],
        [(2, "spatial"), (3, "dynamic")],
        [(2, "spatial"), (2, "dynamic_proto"), (1, "dynamic")],
    ])
    def test_round_trip_exact(self, toy, stages):
        ws = _randomize(WeightSet.all_ones(toy, stages, Quantizer("uniform")), seed=3)
        back = WeightSet.from_jsonable(__import__("json").loads(ws.dumps()))
        assert back.stage_lengths == ws.stage_lengths
        assert back.quantizer == ws.quantizer
        for a, b in zip(ws.stages, back.stages):
            assert a.mode == b.mode
            for x, y in zip(a.param_arrays(), b.param_arrays()):
                np.testing.assert_array_equal(x, y)
        assert back.content_hash() == ws.content_hash()

    def test_save_load(self, toy, tmp_path):
        ws = _randomize(WeightSet.all_ones(toy, [(2, "dynamic")]), seed=9)
        p = tmp_path / "w.json"
        ws.save(p)
        back = WeightSet.load(p)
        np.testing.assert_array_equal(back.stages[0].ucw, ws.stages[0].ucw)

    def test_format_tag_enforced(self, toy):
        d = WeightSet.min_sum(toy, 2).to_jsonable()
        d["format"] = "something-else"
        with pytest.raises(WeightShapeError):
            WeightSet.from_jsonable(d)

    def test_header_length_check(self, toy):
        d = WeightSet.all_ones(toy, [(2, "spatial"), (3, "dynamic")]).to_jsonable()
        d["l2"] = 4
        with pytest.raises(WeightShapeError):
            WeightSet.from_jsonable(d)

    def test_content_hash_tracks_values(self, toy):
        ws = WeightSet.min_sum(toy, 3)
        h0 = ws.content_hash()
        ws.stages[0].cw[1] = 0.875
        assert ws.content_hash() != h0

    def test_copy_is_deep(self, toy):
        ws = WeightSet.min_sum(toy, 3)
        cp = ws.copy()
        cp.stages[0].cw[0] = 0.5
        assert ws.stages[0].cw[0] == 1.0
