import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vids.data import (BsmRecord, NormStats, SynthConfig, apply_labels,
                       kinematic_residuals, make_windows, normalize_apply,
                       normalize_fit, parse_records, serialize_records,
                       synth_generate, window_labels, windows_to_array)
from vids.data.synth import INJECTOR_LABELS, serialize_synth_labels, \
    violation_pvalue
from vids.errors import VidsError


def _record(t, sender=1, label=0, **kw):
    defaults = dict(pos_x=0.0, pos_y=0.0, spd_x=1.0, spd_y=0.0,
                    acl_x=0.0, acl_y=0.0, hed_x=1.0, hed_y=0.0)
    defaults.update(kw)
    return BsmRecord(send_time=float(t), sender_id=sender, pseudo_id=sender,
                     message_id=int(t), label=label, **defaults)


class TestParsing:
    def test_empty_stream(self):
        result = parse_records([])
        assert result.records == [] and result.skipped == 0

    def test_single_json_line(self):
        line = json.dumps({"type": 3, "sendTime": 1.5, "sender": 7,
                           "senderPseudo": 107, "messageID": 42,
                           "pos": [1.0, 2.0], "spd": [0.0, 0.0],
                           "acl": [0.0, 0.0], "hed": [1.0, 0.0]})
        result = parse_records([line])
        assert result.skipped == 0
        rec = result.records[0]
        assert rec.pos_x == 1.0 and rec.pos_y == 2.0 and rec.sender_id == 7

    def test_truncated_lines_are_counted(self):
        good = json.dumps({"type": 3, "sendTime": 0.0, "sender": 1,
                           "senderPseudo": 1, "messageID": 0,
                           "pos": [0, 0], "spd": [0, 0], "acl": [0, 0],
                           "hed": [1, 0]})
        bad = good[:40]
        result = parse_records([good, bad, good, good])
        assert len(result.records) == 3 and result.skipped == 1

    def test_csv_roundtrip_header(self):
        lines = ["sendTime,sender,senderPseudo,messageID,"
                 "pos_x,pos_y,spd_x,spd_y,acl_x,acl_y,hed_x,hed_y",
                 "0.5,3,103,9,1,2,3,4,5,6,0.6,0.8"]
        result = parse_records(lines)
        assert result.records[0].spd_y == 4.0

    def test_parse_serialize_parse_identity(self, rng):
        records = synth_generate(SynthConfig(normal_vehicles=2, messages=10,
                                             noise_std=0.3), seed=4)
        text = serialize_records(records)
        again = parse_records(text.splitlines())
        assert again.skipped == 0
        text2 = serialize_records(again.records)
        assert text == text2

    def test_label_sidecar(self):
        records = [_record(0, sender=1), _record(0, sender=2)]
        apply_labels(records, {2: 5})
        assert records[0].label == 0 and records[1].label == 5

    def test_unreadable_stream_fails(self):
        with pytest.raises(VidsError):
            parse_records("/nonexistent/path.jsonl")

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            _record(0, label=20)


class TestWindows:
    def test_100_samples_w20_stride20_gives_5(self):
        records = [_record(t) for t in range(100)]
        assert len(make_windows(records, 20, 20)) == 5

    def test_19_samples_w20_gives_0(self):
        records = [_record(t) for t in range(19)]
        assert make_windows(records, 20) == []

    def test_21_samples_w20_stride1_gives_2(self):
        records = [_record(t) for t in range(21)]
        assert len(make_windows(records, 20, 1)) == 2

    @given(st.integers(1, 60), st.integers(1, 25), st.integers(1, 10))
    @settings(max_examples=60, deadline=None)
    def test_window_count_formula(self, n, w, stride):
        records = [_record(t) for t in range(n)]
        expected = (n - w) // stride + 1 if n >= w else 0
        assert len(make_windows(records, w, stride)) == expected

    def test_windows_never_straddle_senders(self):
        records = ([_record(t, sender=1) for t in range(25)]
                   + [_record(t, sender=2) for t in range(25)])
        for win in make_windows(records, 20, 1):
            assert win.sender_id in (1, 2)
        assert len(make_windows(records, 20, 1)) == 12

    def test_window_spanning_label_change_is_discarded(self):
        records = ([_record(t, label=0) for t in range(30)]
                   + [_record(t + 30, label=3) for t in range(30)])
        wins = make_windows(records, 20, 1)
        labels = {w.label for w in wins}
        assert labels == {0, 3}
        assert len(wins) == 2 * 11   # each 30-run alone, never mixed

    def test_values_layout_features_by_time(self):
        records = [_record(t, pos_x=float(t)) for t in range(20)]
        win = make_windows(records, 20)[0]
        assert win.values.shape == (8, 20)
        np.testing.assert_allclose(win.values[0], np.arange(20))


class TestNormalization:
    def test_two_point_feature(self):
        values = np.zeros((2, 8, 1), dtype=np.float32)
        values[0, :, 0] = 1.0
        values[1, :, 0] = 3.0
        stats = NormStats.fit(values)
        out = stats.apply(values)
        np.testing.assert_allclose(out[:, 0, 0], [-1.0, 1.0], atol=1e-6)

    def test_constant_feature_floored(self):
        values = np.full((3, 8, 4), 7.0, dtype=np.float32)
        stats = NormStats.fit(values)
        assert (stats.std == 1e-8).all()
        np.testing.assert_allclose(stats.apply(values), 0.0)

    def test_fit_apply_standardizes_training_set(self, rng):
        values = rng.normal(3.0, 2.5, size=(50, 8, 20)).astype(np.float32)
        stats = NormStats.fit(values)
        out = stats.apply(values).astype(np.float64)
        np.testing.assert_allclose(out.mean(axis=(0, 2)), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.std(axis=(0, 2)), 1.0, atol=1e-6)

    def test_idempotent_on_standardized_data(self, rng):
        values = rng.normal(size=(40, 8, 5)).astype(np.float64)
        values -= values.mean(axis=(0, 2), keepdims=True)
        values /= values.std(axis=(0, 2), keepdims=True)
        stats = NormStats.fit(values)
        out = stats.apply(values)
        np.testing.assert_allclose(out, values, atol=1e-5)

    def test_empty_training_set_fails(self):
        with pytest.raises(VidsError):
            normalize_fit([])

    def test_normalize_apply_on_window_list(self):
        records = [_record(t) for t in range(20)]
        wins = make_windows(records, 20)
        stats = normalize_fit(wins)
        out = normalize_apply(stats, wins)
        assert out[0].values.shape == (8, 20)


class TestSynth:
    def test_zero_vehicles_empty_stream(self):
        assert synth_generate(SynthConfig(normal_vehicles=0), seed=0) == []

    def test_constant_speed_kinematics(self):
        cfg = SynthConfig(normal_vehicles=1, messages=5, dt=1.0,
                          noise_std=0.0, accel_scale=0.0,
                          speed_min=1.0, speed_max=1.0, area=0.0)
        records = synth_generate(cfg, seed=0)
        spd = np.array([[r.spd_x, r.spd_y] for r in records])
        speeds = np.linalg.norm(spd, axis=1)
        np.testing.assert_allclose(speeds, 1.0)
        pos = np.array([[r.pos_x, r.pos_y] for r in records])
        step = pos[1] - pos[0]
        for t in range(4):
            np.testing.assert_allclose(pos[t + 1] - pos[t], step, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(step), 1.0)

    def test_deterministic_under_seed(self):
        cfg = SynthConfig(normal_vehicles=2, attacks={"replay": 1},
                          messages=30, noise_std=0.5)
        a = serialize_records(synth_generate(cfg, seed=9))
        b = serialize_records(synth_generate(cfg, seed=9))
        assert a == b

    def test_unknown_injector_fails(self):
        with pytest.raises(VidsError, match="unknown injector"):
            synth_generate(SynthConfig(attacks={"teleport": 1}), seed=0)

    def test_constant_position_shares_one_position_while_speed_varies(self):
        cfg = SynthConfig(normal_vehicles=1,
                          attacks={"constant_position": 1}, messages=40,
                          noise_std=0.0)
        records = synth_generate(cfg, seed=2)
        attacked = [r for r in records if r.label == 1]
        pos = {(r.pos_x, r.pos_y) for r in attacked}
        spd = {(r.spd_x, r.spd_y) for r in attacked}
        assert len(pos) == 1 and len(spd) > 1

    def test_normal_traffic_satisfies_kinematic_bound(self):
        cfg = SynthConfig(normal_vehicles=6, messages=200, noise_std=0.5)
        records = synth_generate(cfg, seed=3)
        res = kinematic_residuals(records, cfg.dt)
        assert res.shape[0] >= 1000
        bound = 8 * cfg.noise_std * (1 + cfg.dt)
        assert (res <= bound).mean() > 0.999

    TARGETED_FIELD = {
        "constant_position": "pos", "constant_offset": "pos",
        "random_position": "pos", "random_offset": "pos",
        "eventual_stop": "pos", "replay": "pos",
        "constant_speed": "spd", "speed_offset": "spd", "random_speed": "spd",
    }

    @pytest.mark.parametrize("injector", sorted(INJECTOR_LABELS))
    def test_injector_breaks_exactly_its_targeted_field(self, injector):
        """Reported vs true stream: the targeted field deviates (binomial
        test, p < 0.01, >= 1000 attacked messages); other fields match."""
        from vids.data.synth import _inject, _simulate_track
        cfg = SynthConfig(normal_vehicles=0, messages=1400, noise_std=0.0)
        syn_rng = np.random.default_rng(17)
        track = _simulate_track(cfg, syn_rng)
        decoy = _simulate_track(cfg, syn_rng)
        out, labels = _inject(injector, track, [decoy], cfg, syn_rng)
        attacked = labels > 0
        assert attacked.sum() >= 1000
        target = self.TARGETED_FIELD[injector]
        dev = np.linalg.norm(out[target] - track[target], axis=1)
        violations = int((dev[attacked] > 1e-6).sum())
        p = violation_pvalue(violations, int(attacked.sum()), 1e-4)
        assert p < 0.01, f"{injector}: {violations} deviations, p={p}"
        for field in ("pos", "spd", "acl", "hed"):
            if field != target:
                np.testing.assert_array_equal(out[field], track[field])

    @pytest.mark.parametrize("injector",
                             sorted(set(INJECTOR_LABELS) - {"constant_offset"}))
    def test_self_inconsistent_injectors_break_stream_kinematics(self, injector):
        """All injectors except the constant offset (which shifts every
        position coherently) also break the reported stream's own pos/spd
        consistency at p < 0.01."""
        cfg = SynthConfig(normal_vehicles=2, attacks={injector: 6},
                          messages=200, noise_std=0.5)
        records = synth_generate(cfg, seed=7)
        normal = [r for r in records if r.sender_id < 2]
        attacked = [r for r in records if r.sender_id >= 2 and r.label > 0]
        assert len(attacked) >= 800
        bound = 8 * cfg.noise_std * (1 + cfg.dt)
        null_rate = max((kinematic_residuals(normal, cfg.dt) > bound).mean(),
                        1e-4)
        res = kinematic_residuals(attacked, cfg.dt)
        violations = int((res > bound).sum())
        p = violation_pvalue(violations, res.shape[0], null_rate)
        assert p < 0.01, f"{injector}: {violations}/{res.shape[0]} p={p}"

    def test_sidecar_labels_from_records(self):
        cfg = SynthConfig(normal_vehicles=1, attacks={"eventual_stop": 1},
                          messages=40)
        records = synth_generate(cfg, seed=1)
        sidecar = json.loads(serialize_synth_labels(records))
        assert sidecar["0"] == 0
        assert sidecar["1"] == INJECTOR_LABELS["eventual_stop"]

    def test_windows_array_helpers(self):
        cfg = SynthConfig(normal_vehicles=1, attacks={"random_speed": 1},
                          messages=60)
        records = synth_generate(cfg, seed=5)
        wins = make_windows(records, 20, 20)
        arr = windows_to_array(wins)
        labels = window_labels(wins)
        assert arr.shape == (len(wins), 8, 20)
        assert set(labels) == {0, INJECTOR_LABELS["random_speed"]}
