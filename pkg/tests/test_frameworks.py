import io

import numpy as np
import pytest

from canet.channel import ScmConfig, generate_dataset
from canet.frameworks import (
    FEEDBACK_KINDS,
    Kind,
    TrainConfig,
    acquire,
    build_framework,
    complexity_table,
    evaluate,
    fit,
    framework_bytes,
    framework_from_stream,
    load_framework,
    parse_kind,
    pilot_similarity_db,
    predict,
    save_framework,
    snr_sigma,
    split_arrays,
    to_complex,
    to_real,
    train_end_to_end,
    train_two_phase,
    transmit,
)

from conftest import framework_fd_error

ALL_KINDS = list(Kind)


class TestTransmit:
    def test_identity_pilot_without_noise(self):
        rng = np.random.default_rng(0)
        h = rng.normal(size=6) + 1j * rng.normal(size=6)
        y = transmit(h, np.eye(6), np.zeros((6, 6)), 0.0)
        np.testing.assert_array_equal(y, np.concatenate([h.real, h.imag]))

    def test_matches_complex_product(self):
        rng = np.random.default_rng(1)
        h = rng.normal(size=(3, 8)) + 1j * rng.normal(size=(3, 8))
        pr, pi = rng.normal(size=(2, 4, 8))
        y = transmit(h, pr, pi, 0.0)
        np.testing.assert_allclose(to_complex(y), h @ (pr + 1j * pi).T, rtol=0, atol=1e-12)

    def test_noise_power(self):
        y = transmit(np.zeros((100_000, 4)), np.ones((1, 4)), np.ones((1, 4)), 1.0, np.random.default_rng(2))
        assert np.mean(y[:, 0] ** 2 + y[:, 1] ** 2) == pytest.approx(1.0, rel=0.01)
        assert np.mean(y[:, 0] ** 2) == pytest.approx(0.5, rel=0.01)

    def test_errors(self):
        with pytest.raises(ValueError):
            transmit(np.zeros(4), np.zeros((2, 3)), np.zeros((2, 3)), 0.0)
        with pytest.raises(ValueError):
            transmit(np.zeros(4), np.zeros((2, 4)), np.zeros((2, 4)), -1.0)
        with pytest.raises(ValueError):
            transmit(np.zeros(4), np.zeros((2, 4)), np.zeros((2, 4)), 1.0)

    def test_snr_sigma(self):
        y_re, y_im = np.full((4, 2), 3.0), np.full((4, 2), 4.0)
        assert snr_sigma(y_re, y_im, 10.0) ** 2 == pytest.approx(25.0 / 10.0)

    def test_real_complex_round_trip(self):
        h = np.array([1 + 2j, -3 + 0.5j])
        np.testing.assert_array_equal(to_real(h), [1, -3, 2, 0.5])
        np.testing.assert_array_equal(to_complex(to_real(h)), h)


class TestBuild:
    def test_upaid_penet_shapes(self):
        fw = build_framework("UpAidPEnet", 64, 16)
        assert [layer.out_dim for layer in fw.pilot.designer.layers] == [128, 128, 128, 2048]
        assert [layer.out_dim for layer in fw.estimator.layers] == [128] * 4
        assert [layer.activation for layer in fw.estimator.layers] == ["selu", "selu", "selu", "tanh"]
        assert fw.feedback is None

    def test_upaid_fbnet_dims(self):
        fw = build_framework("UpAidFBnet", 64, n_bits=32)
        assert fw.feedback.encoder.out_dim == 8
        assert fw.feedback.decoder.layers[0].in_dim == 72
        assert fw.feedback.uses_uplink_side_info

    def test_fc_baseline_has_no_side_input(self):
        fw = build_framework("FC", 64, n_bits=32)
        assert fw.feedback.decoder.layers[0].in_dim == 8
        assert not fw.feedback.uses_uplink_side_info

    def test_canet_s_composition(self):
        fw = build_framework("CAnetS", 32, 6, 24)
        pe = build_framework("UpAidPEnet", 32, 6)
        fb = build_framework("UpAidFBnet", 32, n_bits=24)
        assert fw.param_count() == pe.param_count() + fb.param_count()
        assert fw.feedback.encoder.in_dim == 64

    def test_canet_j_has_no_estimator(self):
        fw = build_framework("CAnetJ", 32, 6, 24)
        assert fw.estimator is None
        assert fw.feedback.encoder.in_dim == 12
        assert fw.feedback.decoder.layers[0].in_dim == 32 + 6

    def test_acqnet_j_uses_fixed_learned_pilot(self):
        fw = build_framework("AcqNetJ", 32, 6, 24)
        assert fw.pilot.mode == "learned_fixed"
        assert fw.pilot.designer is None

    def test_penet_pilot_layers_run_twice(self):
        fw = build_framework("PEnet", 16, 4)
        occ = fw.pilot.occurrences()
        assert len(occ) == 4 and len({id(layer) for layer in occ}) == 2
        assert all(not layer.use_bias for layer in occ)

    @pytest.mark.parametrize("kw", [dict(kind="CAnetJ", n_t=8, m=2, n_bits=10), dict(kind="CAnetJ", n_t=8, m=0),
                                    dict(kind="PEnet", n_t=0, m=2), dict(kind="UpAidFBnet", n_t=8, n_bits=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            build_framework(**kw)

    def test_parse_kind_aliases(self):
        assert parse_kind("fc") is Kind.FC_BASELINE
        assert parse_kind("gaussian") is Kind.GAUSSIAN
        assert parse_kind("ComAcqNet-J") is Kind.ACQNET_J
        assert parse_kind("CAnet-J") is Kind.CANET_J
        with pytest.raises(ValueError):
            parse_kind("resnet")

    @pytest.mark.parametrize("kind", sorted(FEEDBACK_KINDS, key=lambda k: k.code))
    @pytest.mark.parametrize("n_bits", [16, 20, 64])
    def test_feedback_budget(self, kind, n_bits):
        fw = build_framework(kind, 16, 4, n_bits, seed=0)
        assert fw.feedback_bits() == n_bits
        x = np.random.default_rng(0).normal(size=fw.feedback.encoder.in_dim) * 0.1
        assert len(fw.feedback.bitstream(x)) * 8 == n_bits + (-n_bits) % 8

    def test_complexity_table_totals(self):
        fw = build_framework("PEnet", 16, 4)
        rows = complexity_table(fw)
        assert sum(r[3] for r in rows) == fw.param_count()
        assert sum(r[4] for r in rows) == fw.flop_count()


@pytest.fixture(scope="module")
def tiny():
    return generate_dataset(ScmConfig(n_ant=8, seed=21), 400)


class TestForward:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_outputs_bounded_and_deterministic(self, kind, tiny):
        fw = build_framework(kind, 8, 3, 8, seed=1)
        pair = tiny.test[0]
        a = acquire(fw, pair, 0.1, np.random.default_rng(3))
        b = acquire(fw, pair, 0.1, np.random.default_rng(3))
        assert a.shape == (16,)
        assert np.all(np.abs(a) < 1.0)
        assert a.tobytes() == b.tobytes()

    def test_uninitialized(self, tiny):
        fw = build_framework("CAnetJ", 8, 2, 8)
        with pytest.raises(RuntimeError):
            acquire(fw, tiny.test[0], 0.0)

    def test_sigma_requires_noise_source(self, tiny):
        fw = build_framework("PEnet", 8, 2, seed=0)
        h, mag = split_arrays(tiny.test)
        with pytest.raises(ValueError):
            fw.forward(h, mag, sigma=0.5)

    def test_backward_without_forward(self):
        fw = build_framework("CAnetJ", 8, 2, 8, seed=0)
        with pytest.raises(RuntimeError):
            fw.backward(np.zeros((1, 16)))

    def test_designed_pilots_are_bounded(self, tiny):
        fw = build_framework("UpAidPEnet", 8, 3, seed=0)
        p_re, p_im = fw.pilot.matrices(np.abs(tiny.test.h_a_ul))
        assert p_re.shape == (len(tiny.test), 3, 8)
        assert np.all(np.abs(p_re) < 1) and np.all(np.abs(p_im) < 1)

    def test_observation_equals_transmit(self, tiny):
        fw = build_framework("UpAidPEnet", 8, 3, seed=0)
        mag = np.abs(tiny.test.h_a_ul[:5])
        y = fw.observe(to_real(tiny.test.h_a_dl[:5]), mag, record=False)
        p_re, p_im = fw.pilot.matrices(mag)
        for i in range(5):
            np.testing.assert_allclose(y[i], transmit(tiny.test.h_a_dl[i], p_re[i], p_im[i], 0.0), atol=1e-12)

    def test_snr_calibration(self, tiny):
        fw = build_framework("Gaussian", 8, 4, seed=0)
        h, mag = split_arrays(tiny.train)
        clean = fw.observe(h, mag, record=False)
        noisy = fw.observe(h, mag, snr_db=0.0, rng=np.random.default_rng(0), record=False)
        assert fw.last_sigma ** 2 == pytest.approx(np.mean(np.sum(clean[:, :4] ** 2 + clean[:, 4:] ** 2, 1)) / 4)
        ratio = np.mean(np.sum(clean**2, 1)) / np.mean(np.sum((noisy - clean) ** 2, 1))
        assert ratio == pytest.approx(1.0, rel=0.15)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_gradients_match_finite_differences(kind):
    # sigma is held fixed so the observation is a smooth function of the parameters
    assert framework_fd_error(kind, np.random.default_rng(kind.code)) <= 1e-6


def test_canet_j_pilot_designer_receives_gradient(tiny):
    fw = build_framework("CAnetJ", 8, 2, 8, seed=0)
    h, mag = split_arrays(tiny.train)
    out = fw.forward(h[:64], mag[:64], snr_db=10.0, rng=np.random.default_rng(0))
    fw.backward(out - h[:64])
    assert all(np.abs(layer.grad_weight).sum() > 0 for layer in fw.pilot.designer.layers)


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_round_trip(self, kind, tiny, tmp_path):
        fw = build_framework(kind, 8, 3, 12, seed=4)
        save_framework(fw, tmp_path / "fw.bin")
        back = load_framework(tmp_path / "fw.bin")
        assert back.kind is fw.kind and (back.n_t, back.m, back.n_bits) == (fw.n_t, fw.m, fw.n_bits)
        h, mag = split_arrays(tiny.test)
        a = predict(fw, h, mag, snr_db=10.0, seed=1)
        b = predict(back, h, mag, snr_db=10.0, seed=1)
        assert a.tobytes() == b.tobytes()
        assert framework_bytes(back) == framework_bytes(fw)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            framework_from_stream(io.BytesIO(b"CANETCK1" + bytes(20)))


class TestTraining:
    def test_two_phase_freezes_phase_one(self, small_dataset):
        fw = build_framework("CAnetS", 8, 4, 16, seed=0)
        cfg = TrainConfig(epochs=2, batch_size=128)
        fit(fw, small_dataset, cfg, stage="estimate")
        frozen = [(layer.weight.tobytes(), layer.bias.tobytes()) for layer in
                  fw.pilot.unique_layers() + fw.estimator.unique_layers()]
        enc_before = fw.feedback.encoder.layers[0].weight.copy()
        fit(fw, small_dataset, cfg, stage="feedback")
        after = [(layer.weight.tobytes(), layer.bias.tobytes()) for layer in
                 fw.pilot.unique_layers() + fw.estimator.unique_layers()]
        assert frozen == after
        assert not np.array_equal(enc_before, fw.feedback.encoder.layers[0].weight)

    def test_two_phase_returns_both_histories(self, small_dataset):
        fw = build_framework("CAnetS", 8, 4, 16, seed=0)
        h1, h2 = train_two_phase(fw, small_dataset, TrainConfig(epochs=1, batch_size=256))
        assert len(h1.val_nmse_db) == len(h2.val_nmse_db) == 1

    def test_kind_checks(self, small_dataset):
        with pytest.raises(ValueError):
            train_end_to_end(build_framework("CAnetS", 8, 2, 8, seed=0), small_dataset, TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            train_two_phase(build_framework("CAnetJ", 8, 2, 8, seed=0), small_dataset, TrainConfig(epochs=1))

    def test_gaussian_pilot_frozen(self, small_dataset):
        fw = build_framework("Gaussian", 8, 4, seed=0)
        before = fw.pilot.real.weight.tobytes(), fw.pilot.imag.weight.tobytes()
        var = np.var(np.concatenate([fw.pilot.real.weight.ravel(), fw.pilot.imag.weight.ravel()]))
        assert var == pytest.approx(0.5, rel=0.5)
        train_end_to_end(fw, small_dataset, TrainConfig(epochs=2, batch_size=128))
        assert (fw.pilot.real.weight.tobytes(), fw.pilot.imag.weight.tobytes()) == before

    def test_training_is_reproducible(self, small_dataset):
        runs = []
        for _ in range(2):
            fw = build_framework("CAnetJ", 8, 2, 8, seed=3)
            hist = train_end_to_end(fw, small_dataset, TrainConfig(epochs=2, batch_size=256, seed=5))
            runs.append((hist.val_nmse_db, framework_bytes(fw)))
        assert runs[0] == runs[1]

    def test_keep_best_restores_best_epoch(self, small_dataset):
        fw = build_framework("PEnet", 8, 4, seed=0)
        cfg = TrainConfig(epochs=4, batch_size=128)
        hist = fit(fw, small_dataset, cfg)
        again = evaluate(fw, small_dataset.val, cfg.snr_db, seed=cfg.seed + 7919, batch_size=cfg.batch_size)
        assert again == pytest.approx(hist.best_val_nmse_db, abs=1e-12)
        assert hist.best_val_nmse_db == min(hist.val_nmse_db)

    def test_patience_stops_early(self, small_dataset):
        fw = build_framework("PEnet", 8, 4, seed=0)
        hist = fit(fw, small_dataset, TrainConfig(epochs=50, batch_size=1024, lr=0.5, patience=1))
        assert len(hist.val_nmse_db) < 50

    def test_smoothed_loss_mostly_non_increasing(self, small_dataset):
        fw = build_framework("CAnetS", 8, 4, 16, seed=0)
        hist = fit(fw, small_dataset, TrainConfig(epochs=30, batch_size=128), stage="estimate")
        smooth = np.convolve(hist.train_loss, np.ones(5) / 5, mode="valid")
        assert np.sum(np.diff(smooth) > 0) <= 2

    def test_step_hook_sees_every_step(self, small_dataset):
        steps = []
        fw = build_framework("PEnet", 8, 2, seed=0)
        fit(fw, small_dataset, TrainConfig(epochs=2, batch_size=400), step_hook=steps.append)
        assert steps == list(range(2 * 4))

    def test_pilot_adaptivity(self, small_dataset):
        fw = build_framework("UpAidPEnet", 8, 4, seed=0)
        train_end_to_end(fw, small_dataset, TrainConfig(epochs=20, batch_size=128))
        mag = np.abs(small_dataset.test.h_a_ul)
        p_re, _ = fw.pilot.matrices(mag)
        assert not np.allclose(p_re[0], p_re[1])
        assert pilot_similarity_db(fw, mag, np.random.default_rng(0)) < -10 + 3
