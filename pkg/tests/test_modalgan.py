import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cyclemodal.dynamics import build_mdof_chain, simulate
from cyclemodal.metrics import nmse
from cyclemodal.modalgan import (CycleGANModal, CycleGanNets, LossRecord, TrainConfig,
                                 adversarial_losses, decompose, discriminator_loss,
                                 generator_adversarial_loss, orthogonality_loss, random_axis_pairs,
                                 reconstruction_loss, sample_latent, superpose, train_epoch)
from cyclemodal.neural import MlpParams, gradient_check, mlp_backward, mlp_forward, mlp_init
from cyclemodal.signal import CovariancePCA, SymmetricScaler


def linear_net(M):
    """Affine test-mode net computing ``x @ M.T``."""
    n = M.shape[0]
    p = MlpParams(n, n, n, hidden_activation="identity")
    p.W1[:] = M
    p.W2[:] = np.eye(n)
    return p


@pytest.fixture(scope="module")
def duffing():
    return simulate(build_mdof_chain(2, cubic_terms=[(0, 1500)]), 2048, seed=0)


@pytest.fixture(scope="module")
def scaled(duffing):
    return SymmetricScaler().fit_transform(CovariancePCA().fit_transform(duffing.data))


# -- latent sampling -------------------------------------------------------------

def test_latent_moments():
    z = sample_latent(100000, 2, np.random.default_rng(0))
    assert np.all(np.abs(z.mean(0)) < 0.02)
    np.testing.assert_allclose(np.cov(z, rowvar=False), np.eye(2), atol=0.02)


def test_latent_three_dims_uncorrelated():
    z = sample_latent(100000, 3, 1)
    c = np.corrcoef(z, rowvar=False)
    assert np.max(np.abs(c - np.eye(3))) < 0.02


def test_latent_reproducible():
    assert np.array_equal(sample_latent(5, 2, np.random.default_rng(3)),
                          sample_latent(5, 2, np.random.default_rng(3)))


# -- adversarial terms -----------------------------------------------------------

def test_uninformative_discriminator():
    D = MlpParams(2, 3, 1, "sigmoid")
    x = np.random.default_rng(0).standard_normal((7, 2))
    d_loss, g_loss, _ = adversarial_losses(D, x, x + 1)
    assert d_loss == pytest.approx(2 * np.log(2), abs=1e-15)
    assert g_loss == pytest.approx(np.log(2), abs=1e-15)


def test_perfect_discriminator_limit():
    D = MlpParams(1, 1, 1, "sigmoid")
    D.W1[:] = 1.0
    D.W2[:] = 60.0
    d_loss, g_loss, _ = adversarial_losses(D, np.full((4, 1), 5.0), np.full((4, 1), -5.0))
    assert d_loss < 1e-20 and g_loss > 50


def test_adversarial_losses_are_finite_for_saturated_logits():
    D = MlpParams(1, 1, 1, "sigmoid")
    D.W1[:] = 1.0
    D.W2[:] = 1e4
    d_loss, g_loss, grads = adversarial_losses(D, np.full((2, 1), -5.0), np.full((2, 1), 5.0))
    assert np.isfinite(d_loss) and np.isfinite(g_loss)
    assert all(np.all(np.isfinite(g)) for g in grads.values())


def test_discriminator_gradient():
    rng = np.random.default_rng(1)
    D = mlp_init(2, 4, 1, "sigmoid", seed=2)
    real, fake = rng.standard_normal((9, 2)), rng.standard_normal((6, 2)) + 0.5
    assert gradient_check(D, lambda: discriminator_loss(D, real, fake)) < 1e-5


def test_generator_adversarial_gradient():
    rng = np.random.default_rng(3)
    G = mlp_init(2, 4, 2, seed=4)
    D = mlp_init(2, 4, 1, "sigmoid", seed=5)
    z = rng.standard_normal((8, 2))

    def loss_fn():
        fake, cache = mlp_forward(G, z)
        loss, gfake = generator_adversarial_loss(D, fake)
        return loss, mlp_backward(G, cache, gfake)[0]
    assert gradient_check(G, loss_fn) < 1e-5


# -- reconstruction --------------------------------------------------------------

def test_identity_generators_reconstruct_exactly():
    x = np.random.default_rng(0).standard_normal((10, 3))
    loss, ga, gb = reconstruction_loss(linear_net(np.eye(3)), linear_net(np.eye(3)), x)
    assert loss == 0 and np.all(ga == 0) and np.all(gb == 0)


def test_negated_inverse_composition():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    x = rng.standard_normal((25, 3))
    loss, *_ = reconstruction_loss(linear_net(A), linear_net(-np.linalg.inv(A)), x)
    assert loss == pytest.approx(4 * np.mean(np.sum(x * x, axis=1)), rel=1e-12)


def test_reconstruction_gradient():
    rng = np.random.default_rng(2)
    Ga, Gb = mlp_init(2, 5, 2, seed=3), mlp_init(2, 5, 2, seed=4)
    x = rng.standard_normal((12, 2))

    def loss_fn():
        loss, ga, gb = reconstruction_loss(Ga, Gb, x)
        return loss, [ga, gb]
    assert gradient_check([Ga, Gb], loss_fn) < 1e-5


# -- orthogonality ---------------------------------------------------------------

def test_sheared_map_penalty():
    u = np.random.default_rng(0).standard_normal((16, 2))
    loss, _ = orthogonality_loss(linear_net(np.array([[1.0, 1.0], [0.0, 1.0]])), u)
    assert abs(loss - 0.5) < 1e-10


@pytest.mark.parametrize("n, seed", [(2, 0), (3, 1), (4, 2)])
def test_orthogonal_map_penalty_is_zero(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    loss, grad = orthogonality_loss(linear_net(3.0 * Q), rng.standard_normal((20, n)), rng=rng)
    assert abs(loss) < 1e-10


def test_orthogonality_gradient_two_dof():
    G = mlp_init(2, 6, 2, seed=7)
    u = np.random.default_rng(8).standard_normal((10, 2))
    assert gradient_check(G, lambda: orthogonality_loss(G, u, 0.05)) < 1e-4


def test_orthogonality_gradient_three_dof():
    G = mlp_init(3, 8, 3, seed=9)
    rng = np.random.default_rng(10)
    u = rng.standard_normal((10, 3))
    pairs = random_axis_pairs(10, 3, rng)
    assert gradient_check(G, lambda: orthogonality_loss(G, u, 0.05, pairs=pairs)) < 1e-4


def test_orthogonality_degenerate_map_warns():
    with pytest.warns(RuntimeWarning, match="degenerate"):
        loss, grad = orthogonality_loss(MlpParams(2, 3, 2), np.ones((4, 2)))
    assert loss == 0 and np.all(grad == 0)


def test_axis_pairs_distinct():
    rng = np.random.default_rng(0)
    p = random_axis_pairs(1000, 4, rng)
    assert np.all(p[:, 0] != p[:, 1]) and p.min() == 0 and p.max() == 3
    assert np.all(random_axis_pairs(5, 2, rng) == [0, 1])
    with pytest.raises(ValueError):
        random_axis_pairs(5, 1, rng)


def test_composite_generator_objective_gradient():
    rng = np.random.default_rng(11)
    nets = CycleGanNets(2, 6, 12)
    y, u = rng.uniform(-1, 1, (10, 2)), rng.standard_normal((10, 2))
    lam = 10.0

    def loss_fn():
        fake_u, cu = mlp_forward(nets.G_yu, y)
        g1, gfu = generator_adversarial_loss(nets.D_u, fake_u)
        fake_y, cy = mlp_forward(nets.G_uy, u)
        g2, gfy = generator_adversarial_loss(nets.D_y, fake_y)
        ra, ga_yu, ga_uy = reconstruction_loss(nets.G_yu, nets.G_uy, y)
        rb, gb_uy, gb_yu = reconstruction_loss(nets.G_uy, nets.G_yu, u)
        orth, go = orthogonality_loss(nets.G_uy, u)
        grad_yu = mlp_backward(nets.G_yu, cu, gfu)[0] + lam * (ga_yu + gb_yu)
        grad_uy = mlp_backward(nets.G_uy, cy, gfy)[0] + lam * (ga_uy + gb_uy) + go
        return g1 + g2 + lam * (ra + rb) + orth, [grad_yu, grad_uy]
    assert gradient_check([nets.G_yu, nets.G_uy], loss_fn) < 1e-4


# -- training loop ---------------------------------------------------------------

def test_train_config_validation():
    for bad in (dict(lambda_cycle=0), dict(ortho_eps=0), dict(ortho_weight=-1),
                dict(cycle_norm_order=1), dict(batch_size=0), dict(lr=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_epoch_smoke_finite(scaled):
    cfg = TrainConfig()
    nets = CycleGanNets(2, 8, 0, cfg.adam_hyper())
    rng = np.random.default_rng(0)
    recs = [train_epoch(nets, scaled, cfg, rng, e) for e in range(10)]
    assert all(isinstance(r, LossRecord) and r.is_finite() for r in recs)
    r = recs[-1]
    assert r.total == pytest.approx(r.g_adv_yu + r.g_adv_uy + 10 * r.recon + r.ortho)


def test_reconstruction_dominated_training_descends(scaled):
    # very large cycle weight: Adam's shared second moments make the adversarial
    # steps negligible, so the cycle error falls (block means, minibatch noise aside)
    cfg = TrainConfig(lambda_cycle=1e4, ortho_weight=0.0)
    nets = CycleGanNets(2, 8, 0, cfg.adam_hyper())
    rng = np.random.default_rng(1)
    recon = np.array([train_epoch(nets, scaled, cfg, rng, e).recon for e in range(50)])
    blocks = recon.reshape(5, 10).mean(axis=1)
    assert np.all(np.diff(blocks) < 0)
    assert recon[-1] < 0.05 * recon[0]


def test_train_epoch_channel_mismatch(scaled):
    with pytest.raises(ValueError, match="channels"):
        train_epoch(CycleGanNets(3, 4, 0), scaled, TrainConfig(), np.random.default_rng(0))


def test_nets_seeded():
    a, b = CycleGanNets(2, 5, 7), CycleGanNets(2, 5, 7)
    for name in CycleGanNets.NAMES:
        assert np.array_equal(getattr(a, name).theta, getattr(b, name).theta)
    assert not np.array_equal(a.G_yu.theta, a.G_uy.theta)


def test_snapshot_restores_parameters():
    nets = CycleGanNets(2, 4, 0)
    snap = nets.snapshot()
    before = nets.G_uy.theta.copy()
    nets.step("G_uy", np.ones(nets.G_uy.n_params))
    assert not np.array_equal(nets.G_uy.theta, before)
    nets.load(snap)
    assert np.array_equal(nets.G_uy.theta, before)


# -- estimator -------------------------------------------------------------------

@pytest.fixture(scope="module")
def fitted(duffing):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return CycleGANModal(hidden=8, epochs=20, checkpoint_every=5, random_state=0).fit(duffing)


def test_params_round_trip():
    m = CycleGANModal(hidden=30, lr=2e-3, random_state=4)
    assert m.get_params()["hidden"] == 30
    c = clone(m)
    assert c.get_params() == m.get_params()
    assert m.set_params(epochs=7).epochs == 7


def test_not_fitted():
    with pytest.raises(NotFittedError):
        CycleGANModal().transform(np.zeros((5, 2)))


def test_single_channel_rejected():
    with pytest.raises(ValueError, match="2 channels"):
        CycleGANModal(epochs=1).fit(np.random.default_rng(0).standard_normal((100, 1)))


def test_fit_records_checkpoints(fitted):
    assert [c["epoch"] for c in fitted.checkpoints_] == [0, 5, 10, 15, 20]
    assert len(fitted.history_) == 20
    assert fitted.best_epoch_ in (5, 10, 15, 20)
    assert fitted.best_lcos_ == min(c["L_cos"] for c in fitted.checkpoints_[1:])
    assert np.isfinite(fitted.baseline_lcos_) and fitted.fs_ == 100.0


def test_transform_shapes_and_determinism(fitted, duffing):
    U1 = fitted.transform(duffing)
    U2 = fitted.transform(duffing.data)
    assert U1.shape == (2048, 2) and np.array_equal(U1, U2)


def test_superposition_matches_recorded_error(fitted, duffing):
    rec = superpose(fitted, decompose(fitted, duffing))
    assert rec.role == "displacement"
    assert nmse(rec.data, duffing.data) == pytest.approx(fitted.best_nmse_, rel=1e-9)


def test_zero_modal_input_maps_to_constant(fitted):
    Y = fitted.inverse_transform(np.zeros((4, 2)))
    assert np.all(Y == Y[0])


def test_refit_is_reproducible(duffing, fitted):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        again = clone(fitted).fit(duffing)
    assert again.checkpoints_ == fitted.checkpoints_
    assert np.array_equal(again.nets_.G_yu.theta, fitted.nets_.G_yu.theta)


def test_callback_sees_each_checkpoint(duffing):
    seen = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        CycleGANModal(hidden=4, epochs=4, checkpoint_every=2, random_state=1).fit(
            duffing, callback=lambda m, row: seen.append(row["epoch"]))
    assert seen == [0, 2, 4]
