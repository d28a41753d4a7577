import numpy as np
import pytest

from fedunlearn.data import ClientDataset, Dataset, partition
from fedunlearn.federation import (
    FederationConfig,
    aggregation_weights,
    fedavg,
    local_train,
    posttrain,
    retrain_baseline,
    train_federation,
)
from fedunlearn.nn import ModelParams, OptimizerState, init_weights, loss_and_grad, mlp, sgd_step
from fedunlearn.seeding import PHASE_RETRAIN, PHASE_TRAIN, child_seed

ARCH = mlp((4, 4, 1), 8, 10)


def random_model(seed, dtype=np.float32) -> ModelParams:
    return ModelParams(ARCH, init_weights(ARCH, seed, dtype=dtype))


def toy_clients(n_clients=2, per_client=24, seed=0) -> list[ClientDataset]:
    n = n_clients * per_client
    rng = np.random.default_rng(seed)
    ds = Dataset(
        rng.uniform(0, 1, (n, 4, 4, 1)).astype(np.float32),
        rng.integers(0, 10, n),
        np.zeros(n, dtype=bool),
    )
    return partition(ds, n_clients, seed=seed)


def vec_model(values) -> ModelParams:
    # Dense(1) on a 1-pixel input: 2 parameters (weight, bias)
    from fedunlearn.nn import ArchSpec, Dense

    arch = ArchSpec((1, 1, 1), (Dense(1),))
    return ModelParams(arch, np.asarray(values, dtype=np.float64))


class TestFedavg:
    def test_identical_models_are_a_fixed_point(self):
        m = random_model(0)
        out = fedavg([m, m, m], [10, 20, 30], "proportional")
        assert np.array_equal(out.weights, m.weights)

    def test_two_model_weighted_mean(self):
        a = vec_model([0.0, 3.0])
        b = vec_model([3.0, 0.0])
        out = fedavg([a, b], [100, 200], "proportional")
        assert out.weights == pytest.approx([2.0, 1.0], rel=1e-15)

    def test_five_models_match_float64_oracle(self):
        rng = np.random.default_rng(42)
        models = [random_model(i, dtype=np.float64) for i in range(5)]
        counts = list(rng.integers(1, 500, 5))
        out = fedavg(models, counts, "proportional")
        total = sum(counts)
        oracle = sum((c / total) * m.weights for c, m in zip(counts, models))
        assert np.max(np.abs(out.weights - oracle)) <= 1e-9

    def test_permutation_invariance(self):
        models = [random_model(i) for i in range(4)]
        counts = [5, 7, 11, 13]
        base = fedavg(models, counts, "proportional")
        perm = [2, 0, 3, 1]
        shuffled = fedavg([models[i] for i in perm], [counts[i] for i in perm], "proportional")
        assert np.allclose(base.weights, shuffled.weights, atol=1e-7)

    def test_equal_mode_is_unweighted_mean(self):
        models = [random_model(i, dtype=np.float64) for i in range(3)]
        out = fedavg(models, [1, 100, 10_000], "equal")
        mean = sum(m.weights for m in models) / 3.0
        assert np.max(np.abs(out.weights - mean)) <= 1e-12

    def test_weights_sum_to_one(self):
        for mode, counts in (("equal", [3, 9, 1]), ("proportional", [10, 30, 60])):
            assert aggregation_weights(counts, mode).sum() == pytest.approx(1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="empty"):
            fedavg([], [], "equal")
        with pytest.raises(ValueError, match="dimension"):
            fedavg([random_model(0), vec_model([1.0, 2.0])], [1, 1], "equal")
        with pytest.raises(ValueError, match="positive total"):
            fedavg([random_model(0)], [0], "proportional")


class TestLocalTrain:
    def test_zero_epochs_returns_start(self):
        client = toy_clients()[0]
        start = random_model(1)
        assert local_train(client, start, 0, 8, 0.1, 0.9, seed=0) is start

    def test_single_step_equals_sgd_step(self):
        # one client, one batch (batch size >= shard), one epoch
        client = toy_clients(per_client=10)[0]
        start = random_model(2)
        seed = child_seed(99, PHASE_TRAIN, 1, 0)
        trained = local_train(client, start, 1, 32, 0.05, 0.9, seed)

        perm = np.random.default_rng(child_seed(99, PHASE_TRAIN, 1, 0)).permutation(10)
        _, grad = loss_and_grad(start, client.train.features[perm], client.train.labels[perm])
        state = OptimizerState.zeros(start.dim, 0.05, 0.9)
        expected, _ = sgd_step(start, grad, state, "descent")
        assert np.array_equal(trained.weights, expected.weights)

    def test_empty_split_rejected(self):
        client = toy_clients()[0]
        empty = ClientDataset(0, Dataset.empty_like(client.train), client.train)
        with pytest.raises(ValueError, match="empty train split"):
            local_train(empty, random_model(0), 1, 8, 0.1, 0.9, seed=0)


class TestTrainFederation:
    def test_one_round_two_clients_is_midpoint(self):
        cfg = FederationConfig(n_clients=2, rounds=1, batch_size=8, seed=5)
        clients = toy_clients(2)
        start = random_model(3)
        state, _ = train_federation(cfg, clients, start)
        locals_ = [
            local_train(c, start, 1, 8, cfg.learning_rate, cfg.momentum,
                        child_seed(5, PHASE_TRAIN, 1, c.client_id))
            for c in clients
        ]
        midpoint = (locals_[0].weights.astype(np.float64) + locals_[1].weights.astype(np.float64)) / 2
        assert np.array_equal(state.global_model.weights, midpoint.astype(np.float32))
        assert len(state.local_models) == 2

    def test_bitwise_deterministic(self):
        cfg = FederationConfig(n_clients=3, rounds=3, batch_size=8, seed=21)
        clients = toy_clients(3)
        start = random_model(4)
        a, _ = train_federation(cfg, clients, start)
        b, _ = train_federation(cfg, clients, start)
        assert np.array_equal(a.global_model.weights, b.global_model.weights)
        for ma, mb in zip(a.local_models, b.local_models):
            assert np.array_equal(ma.weights, mb.weights)

    def test_parallel_matches_sequential(self):
        clients = toy_clients(4)
        start = random_model(6)
        seq_cfg = FederationConfig(n_clients=4, rounds=2, batch_size=8, seed=8, parallel=False)
        par_cfg = FederationConfig(n_clients=4, rounds=2, batch_size=8, seed=8, parallel=True)
        seq, _ = train_federation(seq_cfg, clients, start)
        par, _ = train_federation(par_cfg, clients, start)
        assert np.array_equal(seq.global_model.weights, par.global_model.weights)

    def test_reference_identity_holds_after_run(self):
        # equal-weight mode: (N*global - local_i)/(N-1) == mean of the others
        cfg = FederationConfig(n_clients=5, rounds=2, batch_size=8, seed=13)
        clients = toy_clients(5)
        state, _ = train_federation(cfg, clients, random_model(7))
        n = 5
        for i in range(n):
            others = [m.weights.astype(np.float64) for j, m in enumerate(state.local_models) if j != i]
            direct = np.mean(others, axis=0)
            rebuilt = (n * state.global_model.weights.astype(np.float64)
                       - state.local_models[i].weights.astype(np.float64)) / (n - 1)
            assert np.max(np.abs(rebuilt - direct)) <= 1e-6

    def test_client_count_checked(self):
        cfg = FederationConfig(n_clients=3, rounds=1)
        with pytest.raises(ValueError, match="3 clients"):
            train_federation(cfg, toy_clients(2), random_model(0))

    def test_metrics_emitted_per_round(self):
        cfg = FederationConfig(n_clients=2, rounds=4, batch_size=8, seed=2)
        counter = iter(range(100))
        state, records = train_federation(
            cfg, toy_clients(2), random_model(1), evaluator=lambda m: (0.5, next(counter) / 100)
        )
        assert [r.round_index for r in records] == [1, 2, 3, 4]
        assert all(r.phase == "train" for r in records)
        assert records[-1].updates == 4 * 2 * 3  # 4 rounds x 2 clients x ceil(24/8)


class TestRetrain:
    def test_remaining_weights_renormalized(self):
        assert aggregation_weights([12, 12, 12], "proportional").sum() == pytest.approx(1.0)

    def test_single_client_degenerates_to_centralized(self):
        client = toy_clients(2, per_client=30)[0]
        cfg = FederationConfig(n_clients=2, rounds=3, batch_size=8, seed=17)
        init = random_model(9)
        state, _ = retrain_baseline(cfg, [client], init)

        model = init
        for t in range(1, 4):
            model = local_train(client, model, 1, 8, cfg.learning_rate, cfg.momentum,
                                child_seed(17, PHASE_RETRAIN, t, client.client_id))
        assert np.array_equal(state.global_model.weights, model.weights)

    def test_no_clients_rejected(self):
        cfg = FederationConfig(n_clients=2, rounds=1)
        with pytest.raises(ValueError, match="at least one"):
            retrain_baseline(cfg, [], random_model(0))


class TestPosttrain:
    def test_zero_rounds_is_identity(self):
        start = random_model(11)
        out, records = posttrain(start, toy_clients(2), rounds=0, updates_per_round=25,
                                 batch_size=8, learning_rate=0.01, momentum=0.9, seed=0)
        assert out is start
        assert records == []

    def test_update_budget_respected(self):
        # shards have ceil(24/8)=3 batches; 7 updates forces a wrap-around
        clients = toy_clients(2)
        _, records = posttrain(random_model(12), clients, rounds=2, updates_per_round=7,
                               batch_size=8, learning_rate=0.01, momentum=0.9, seed=3,
                               evaluator=lambda m: (0.0, 0.0))
        assert [r.updates for r in records] == [14, 28]
        assert [r.round_index for r in records] == [1, 2]
        assert all(r.phase == "posttrain" for r in records)

    def test_moves_the_model(self):
        start = random_model(13)
        out, _ = posttrain(start, toy_clients(2), rounds=1, updates_per_round=5,
                           batch_size=8, learning_rate=0.05, momentum=0.9, seed=4)
        assert not np.array_equal(out.weights, start.weights)

    def test_deterministic(self):
        start = random_model(14)
        clients = toy_clients(3)
        a, _ = posttrain(start, clients, 2, 5, 8, 0.01, 0.9, seed=6)
        b, _ = posttrain(start, clients, 2, 5, 8, 0.01, 0.9, seed=6)
        assert np.array_equal(a.weights, b.weights)


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            FederationConfig(n_clients=1)
        with pytest.raises(ValueError):
            FederationConfig(rounds=0)
        with pytest.raises(ValueError):
            FederationConfig(target_client=5, n_clients=5)
        with pytest.raises(ValueError):
            FederationConfig(weighting="median")
