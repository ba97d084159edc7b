import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vaelime import dataio, nnet, serialize
from vaelime.errors import DimensionMismatch
from vaelime.nnet import DenseNet, Layer
from vaelime.vae import (
    VaeModel,
    VaeTrainConfig,
    decode,
    default_latent_dim,
    encode,
    kl_divergence,
    loss_and_grads,
    reparameterize,
    train_vae,
    vae_loss,
)


def zero_model(d=3, latent=2, enc_bias=None, dec_bias=None, means=None, stds=None):
    enc_bias = np.arange(2 * latent, dtype=float) if enc_bias is None else enc_bias
    dec_bias = np.zeros(d) if dec_bias is None else dec_bias
    encoder = DenseNet([Layer(np.zeros((4, d)), np.zeros(4)), Layer(np.zeros((2 * latent, 4)), enc_bias, "identity")])
    decoder = DenseNet([Layer(np.zeros((4, latent)), np.zeros(4)), Layer(np.zeros((d, 4)), dec_bias, "identity")])
    return VaeModel(encoder, decoder, np.zeros(d) if means is None else means, np.ones(d) if stds is None else stds)


@pytest.fixture(scope="module")
def rank2_data():
    cfg = dataio.SynthConfig(n_rows=2000, n_features=8, latent_rank=2, noise_std=0.05)
    return dataio.generate(cfg, seed=1)


@pytest.fixture(scope="module")
def rank2_model(rank2_data):
    return train_vae(rank2_data, VaeTrainConfig(latent_dim=2, epochs=60))


def test_default_latent_dim():
    assert default_latent_dim(4) == 2
    assert default_latent_dim(12) == 3
    assert default_latent_dim(13) == 4


def test_encode_zero_weights_exposes_bias():
    model = zero_model(enc_bias=np.array([0.5, -1.0, 2.0, -3.0]))
    mu, logvar = encode(model, [7.0, -1.0, 3.0])
    np.testing.assert_array_equal(mu, [0.5, -1.0])
    np.testing.assert_array_equal(logvar, [2.0, -3.0])


def test_encode_clamps_logvar():
    model = zero_model(enc_bias=np.array([0.0, 0.0, 50.0, -50.0]))
    _, logvar = encode(model, np.zeros(3))
    np.testing.assert_array_equal(logvar, [10.0, -10.0])


def test_encode_deterministic(rank2_model, rank2_data):
    a = encode(rank2_model, rank2_data.rows[3])
    b = encode(rank2_model, rank2_data.rows[3])
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_encode_hand_set_single_hidden_unit():
    # x=(1): h = tanh(2*1 - 0.5); mu = 3h + 0.1, logvar = -h + 0.2
    encoder = DenseNet([Layer([[2.0]], [-0.5], "tanh"), Layer([[3.0], [-1.0]], [0.1, 0.2], "identity")])
    decoder = DenseNet([Layer([[1.0]], [0.0], "identity")])
    model = VaeModel(encoder, decoder, [0.0], [1.0])
    h = math.tanh(1.5)
    mu, logvar = encode(model, [1.0])
    assert mu[0] == pytest.approx(3 * h + 0.1, abs=1e-15)
    assert logvar[0] == pytest.approx(-h + 0.2, abs=1e-15)


def test_encode_applies_standardization():
    encoder = DenseNet([Layer([[1.0]], [0.0], "identity"), Layer([[1.0], [0.0]], [0.0, 0.0], "identity")])
    decoder = DenseNet([Layer([[1.0]], [0.0], "identity")])
    model = VaeModel(encoder, decoder, [10.0], [2.0])
    mu, _ = encode(model, [14.0])
    assert mu[0] == pytest.approx(2.0)
    assert decode(model, mu)[0] == pytest.approx(14.0)


def test_encode_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        encode(zero_model(), [1.0, 2.0])


def test_reparameterize_examples():
    np.testing.assert_array_equal(reparameterize([1.0, -2.0], [0.3, 0.1], [0.0, 0.0]), [1.0, -2.0])
    np.testing.assert_allclose(reparameterize([1.0, -2.0], [0.0, 0.0], [1.0, 1.0]), [2.0, -1.0])
    np.testing.assert_allclose(reparameterize([1.0, 2.0], [math.log(4.0), 0.0], [0.5, -1.0]), [2.0, 1.0])
    with pytest.raises(DimensionMismatch):
        reparameterize([1.0], [0.0, 0.0], [0.0])


def test_vae_loss_examples():
    x = np.array([0.3, -1.2, 2.0])
    assert vae_loss(x, x, np.zeros(2), np.zeros(2), 1.0).total == 0.0
    loss = vae_loss(x, x, np.array([1.0]), np.array([0.0]), 1.0)
    assert loss.kl == pytest.approx(0.5) and loss.total == pytest.approx(0.5)
    assert vae_loss(x, x, np.zeros(3), np.log(np.ones(3)), 1.0).kl == 0.0


def test_vae_loss_recon_is_feature_mean():
    loss = vae_loss(np.array([0.0, 0.0]), np.array([1.0, 3.0]), np.zeros(1), np.zeros(1), 0.7)
    assert loss.recon == pytest.approx(5.0)
    assert loss.total == pytest.approx(5.0)


def test_kl_matches_closed_form():
    mu = np.array([0.4, -1.1])
    lv = np.array([0.3, -0.8])
    expected = 0.5 * sum(m * m + math.exp(v) - v - 1 for m, v in zip(mu, lv))
    assert kl_divergence(mu, lv) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(
    mu=arrays(np.float64, 4, elements=st.floats(-50, 50)),
    logvar=arrays(np.float64, 4, elements=st.floats(-10, 10)),
)
def test_kl_nonnegative(mu, logvar):
    assert kl_divergence(mu, logvar) >= 0.0


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradients_match_finite_differences(seed):
    r = np.random.default_rng(seed)
    enc = nnet.init_dense_net([4, 6, 4], ["tanh", "identity"], r)
    dec = nnet.init_dense_net([2, 6, 4], ["tanh", "identity"], r)
    xs = r.standard_normal((5, 4))
    eps = r.standard_normal((5, 2))
    _, g_enc, g_dec = loss_and_grads(enc, dec, xs, eps, 0.3)
    h = 1e-5
    worst = 0.0
    for net, grads in ((enc, g_enc), (dec, g_dec)):
        for p, g in zip(net.parameters(), grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                up = loss_and_grads(enc, dec, xs, eps, 0.3)[0].total
                flat[k] = orig - h
                down = loss_and_grads(enc, dec, xs, eps, 0.3)[0].total
                flat[k] = orig
                num = (up - down) / (2 * h)
                worst = max(worst, abs(gflat[k] - num) / max(1e-8, abs(gflat[k]) + abs(num)))
    assert worst <= 1e-4


def test_decode_zero_weight_decoder_is_unstandardized_bias():
    model = zero_model(dec_bias=np.array([1.0, -1.0, 0.5]), means=np.array([10.0, 0.0, 1.0]), stds=np.array([2.0, 3.0, 4.0]))
    for z in ([0.0, 0.0], [5.0, -3.0]):
        np.testing.assert_allclose(decode(model, z), [12.0, -3.0, 3.0])


def test_decode_deterministic_and_checks_dims(rank2_model):
    z = np.array([0.3, -0.2])
    assert decode(rank2_model, z).tobytes() == decode(rank2_model, z).tobytes()
    with pytest.raises(DimensionMismatch):
        decode(rank2_model, [0.1, 0.2, 0.3])


def test_constant_dataset_reconstructs():
    model = train_vae(np.tile([[1.0, 2.0, 3.0]], (256, 1)), VaeTrainConfig(epochs=200))
    assert model.history[-1].recon <= 1e-3


def test_training_is_seed_deterministic():
    data = np.random.default_rng(0).standard_normal((200, 5))
    cfg = VaeTrainConfig(epochs=5, seed=3)
    a = serialize.dumps(serialize.model_to_dict(train_vae(data, cfg)))
    b = serialize.dumps(serialize.model_to_dict(train_vae(data, cfg)))
    assert a == b


def test_rank2_beats_constant_predictor(rank2_model, rank2_data):
    # in standardized units the best constant predictor scores the mean per-feature variance
    xs = (rank2_data.rows - rank2_data.means) / rank2_data.stds
    baseline = float(np.mean(xs.var(axis=0)))
    assert rank2_model.history[-1].recon < baseline
    assert rank2_model.history[-1].total < rank2_model.history[0].total


def test_reconstruction_within_half_std(rank2_model, rank2_data):
    mu, _ = encode(rank2_model, rank2_data.rows)
    err = (decode(rank2_model, mu) - rank2_data.rows) / rank2_data.stds
    rms = np.sqrt(np.mean(err**2, axis=0))
    assert np.all(rms < 0.5)


def test_loss_trend_over_ten_epoch_windows(rank2_model):
    totals = [h.total for h in rank2_model.history]
    for i in range(len(totals) - 10):
        assert totals[i + 10] <= totals[i] * 1.05


def test_latent_scale_recorded(rank2_model, rank2_data):
    mu, _ = encode(rank2_model, rank2_data.rows)
    np.testing.assert_allclose(rank2_model.latent_scale, mu.std(axis=0, ddof=1))


def test_too_few_rows_rejected():
    with pytest.raises(ValueError):
        train_vae(np.zeros((50, 3)), VaeTrainConfig(batch_size=64))


def test_config_validation():
    with pytest.raises(ValueError):
        VaeTrainConfig(kl_weight=-1.0)
    with pytest.raises(ValueError):
        VaeTrainConfig(epochs=0)
