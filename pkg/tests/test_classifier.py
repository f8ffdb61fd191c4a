import numpy as np
import pytest

from vrident.classifier import (BaselineModel, ClassifierError, LabelSpace, RecurrentFunnelConfig,
                                ScoreMatrix, aggregate_session, baseline_predict, baseline_train,
                                load_checkpoint, predict_windows, save_checkpoint, summarize, train)
from vrident.classifier.scores import logsumexp
from vrident.preprocess import FeatureWindow

from gradcheck import funnel_gradient_errors

SMALL = dict(widths=(8, 4), batch_size=8, learning_rate=0.02)


def windows_for(values, frames=12, channels=36, noise=0.0, rng=None):
    out = []
    for pid, v in values:
        d = np.full((frames, channels), v, dtype=float)
        if noise:
            d = d + noise * rng.normal(size=d.shape)
        out.append(FeatureWindow(d, pid, 1, 0.0))
    return out


def test_gradient_check_small_funnel():
    err = funnel_gradient_errors()
    assert err.max() < 1e-4, err.max()


def test_gradient_check_three_layers():
    err = funnel_gradient_errors(widths=(6, 4, 3), n_coords=60, seed=3)
    assert err.max() < 1e-4


def test_memorizes_separable_constants():
    w = windows_for([("a", -1.0)] * 10 + [("b", 1.0)] * 10)
    cfg = RecurrentFunnelConfig(max_epochs=50, patience=50, **SMALL)
    model = train(w, cfg)
    pred = predict_windows(model, w).scores.argmax(1)
    assert np.all(pred == model.labels.encode([x.participant_id for x in w]))


def test_permuted_labels_give_chance_accuracy(rng):
    C = 4
    tr = windows_for([(f"p{i % C}", 0.0) for i in range(80)], noise=1.0, rng=rng)
    te = windows_for([(f"p{i % C}", 0.0) for i in range(400)], noise=1.0, rng=rng)
    labels = list(rng.permutation([w.participant_id for w in tr]))
    model = train(tr, RecurrentFunnelConfig(max_epochs=5, **SMALL), labels=labels)
    S = predict_windows(model, te)
    acc = float((S.scores.argmax(1) == S.true_indices()).mean())
    assert abs(acc - 1 / C) < 0.1


def test_training_is_deterministic(rng):
    w = windows_for([("a", 0.0), ("b", 0.5), ("c", 1.0)] * 8, noise=0.3, rng=rng)
    cfg = RecurrentFunnelConfig(max_epochs=4, **SMALL)
    m1, m2 = train(w, cfg), train(w, cfg)
    assert m1.history[-1]["loss"] == m2.history[-1]["loss"]
    for k in m1.params:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])


def test_prediction_rows_normalized_and_ordered(rng):
    w = windows_for([("a", -1.0), ("b", 1.0)] * 6, noise=0.1, rng=rng)
    model = train(w, RecurrentFunnelConfig(max_epochs=30, **SMALL))
    S = predict_windows(model, w)
    assert len(S) == len(w)
    np.testing.assert_allclose(logsumexp(S.scores, axis=1), 0.0, atol=1e-6)
    assert [r.participant for r in S.rows] == [x.participant_id for x in w]
    assert S.scores.argmax(1)[0] == model.labels.index("a")


def test_train_rejects_bad_input():
    with pytest.raises(ClassifierError):
        train(windows_for([("a", 0.0)] * 3))
    mixed = windows_for([("a", 0.0)]) + windows_for([("b", 0.0)], frames=7)
    with pytest.raises(ClassifierError):
        train(mixed)
    with pytest.raises(ClassifierError):
        RecurrentFunnelConfig(widths=(8, 8))


def test_nonfinite_loss_reported():
    w = windows_for([("a", 0.0), ("b", 1.0)] * 2)
    w[0].data[0, 0] = np.nan
    with pytest.raises(ClassifierError, match="epoch 1"):
        train(w, RecurrentFunnelConfig(max_epochs=2, **SMALL))


def test_head_only_leaves_lstm_weights(rng):
    w = windows_for([("a", -1.0), ("b", 1.0)] * 4, noise=0.1, rng=rng)
    cfg = RecurrentFunnelConfig(max_epochs=3, trainable="head", **SMALL)
    from vrident.classifier.funnel import init_params
    m = train(w, cfg)
    init = init_params(36, 2, cfg.widths, cfg.seed, cfg.dtype)
    np.testing.assert_array_equal(m.params["Wx0"], init["Wx0"])
    assert not np.array_equal(m.params["Wd"], init["Wd"])


def test_checkpoint_round_trip(tmp_path, rng):
    w = windows_for([("a", -1.0), ("b", 1.0)] * 4, noise=0.1, rng=rng)
    model = train(w, RecurrentFunnelConfig(max_epochs=2, **SMALL))
    back = load_checkpoint(save_checkpoint(model, tmp_path / "m.ckpt"))
    assert back.labels == model.labels and back.config == model.config
    np.testing.assert_allclose(predict_windows(back, w).scores,
                               predict_windows(model, w).scores, atol=1e-4)


def test_baseline_separates_participants(rng):
    w = windows_for([("a", -2.0), ("b", 2.0)] * 10, noise=0.5, rng=rng)
    model = baseline_train(w)
    S = baseline_predict(model, w)
    assert np.all(S.scores.argmax(1) == S.true_indices())
    np.testing.assert_allclose(logsumexp(S.scores, axis=1), 0.0, atol=1e-9)


def test_baseline_indistinguishable_classes_chance(rng):
    C = 5
    tr = windows_for([(f"p{i % C}", 0.0) for i in range(200)], noise=1.0, rng=rng)
    te = windows_for([(f"p{i % C}", 0.0) for i in range(1000)], noise=1.0, rng=rng)
    S = baseline_predict(baseline_train(tr), te)
    acc = float((S.scores.argmax(1) == S.true_indices()).mean())
    assert abs(acc - 1 / C) < 0.06


def test_baseline_single_window_centroid(rng):
    w = windows_for([("a", 0.0), ("b", 1.0)], noise=1.0, rng=rng)
    model = baseline_train(w)
    np.testing.assert_allclose(model.centroids, summarize(w))
    assert summarize(w).shape == (2, 72)


def test_baseline_save_load(tmp_path, rng):
    w = windows_for([("a", -2.0), ("b", 2.0)] * 3, noise=0.5, rng=rng)
    m = baseline_train(w)
    back = BaselineModel.load(m.save(tmp_path / "b.bin"))
    np.testing.assert_allclose(baseline_predict(back, w).scores,
                               baseline_predict(m, w).scores, atol=1e-4)


def test_aggregate_single_window():
    row = np.log([[0.2, 0.5, 0.3]])
    for mode in ("logsum", "vote"):
        assert aggregate_session(row, mode).index == 1


def test_aggregate_hand_example():
    rows = np.array([[-0.1, -2.4], [-3.0, -0.2]])
    d = aggregate_session(rows, "logsum")
    np.testing.assert_allclose(d.row, [-3.1, -2.6])
    assert d.index == 1 and not d.tie
    picks = {aggregate_session(rows, "vote", seed=s).index for s in range(40)}
    assert picks == {0, 1}
    v = aggregate_session(rows, "vote", seed=0)
    assert v.tied == (0, 1) and list(v.row) == [1.0, 1.0]
    assert aggregate_session(rows, "vote", seed=7).index == aggregate_session(
        rows, "vote", seed=7).index


def test_aggregate_uniform_rows_tie():
    d = aggregate_session(np.full((3, 4), -np.log(4)), "logsum", seed=2)
    assert d.tie and d.tied == (0, 1, 2, 3)


def test_aggregate_errors_and_labels():
    S = ScoreMatrix(np.log([[0.9, 0.1]]), LabelSpace(("x", "y")))
    assert aggregate_session(S).participant == "x"
    with pytest.raises(ClassifierError):
        aggregate_session(np.empty((0, 2)))
    with pytest.raises(ClassifierError):
        aggregate_session(S, "median")


def test_label_space_and_score_matrix():
    with pytest.raises(ClassifierError):
        LabelSpace(("a", "a"))
    ls = LabelSpace.from_labels(["b", "a", "b"])
    assert ls.ids == ("a", "b") and list(ls.encode(["b", "a"])) == [1, 0]
    with pytest.raises(ClassifierError):
        ls.index("z")
    with pytest.raises(ClassifierError):
        ScoreMatrix(np.zeros((2, 3)), ls)
    S = ScoreMatrix(np.array([[1.0, 2.0]]), ls)
    np.testing.assert_array_equal(S.reorder(LabelSpace(("b", "a"))).scores, [[2.0, 1.0]])
