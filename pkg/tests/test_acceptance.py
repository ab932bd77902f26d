"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Settings (epoch budgets, tolerances, seeds) are pinned here; the
oracles module supplies the independent reference implementations.
"""

import csv
import json
import math
import time

import numpy as np
import pytest

from oracles import confusion_counts, fd_gradients, max_rel_err

from trendfuse import cli, encoder as enc, fusion, ingest, models
from trendfuse import numerics as nm
from trendfuse import synthetic, train as tr
from trendfuse.models import ModelSpec, VALID_KINDS
from trendfuse.numerics import ParameterStore, Tensor

GRAD_TOL = 1e-4
FD_STEP = 1e-5


def _passed(number, name):
    print(f"[criterion {number}] {name}: PASS", flush=True)


# --- criterion 1: gradient suite -----------------------------------------


def _check_grad_case(build, arrays, label):
    """Analytic tape gradients vs central finite differences for one case."""
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    analytic = nm.gradients(build(params), params)

    def value(raw):
        return build({k: Tensor(v) for k, v in raw.items()}).item()

    numeric = fd_gradients(value, arrays, h=FD_STEP)
    for key in arrays:
        err = max_rel_err(analytic[key], numeric[key])
        assert err < GRAD_TOL, f"{label}/{key}: rel err {err:.3e}"
    return 1


def _primitive_grad_cases(rng):
    x = rng.normal(size=(3, 4))
    y = rng.normal(size=(3, 4))
    mix = Tensor(rng.normal(size=(3, 8)))
    mix43 = Tensor(rng.normal(size=(4, 3)))
    return [
        ("add", lambda p: nm.sum_(nm.add(p["x"], p["y"])), {"x": x, "y": y}),
        ("sub", lambda p: nm.sum_(nm.sub(p["x"], p["y"])), {"x": x, "y": y}),
        ("mul", lambda p: nm.sum_(nm.mul(p["x"], p["y"])), {"x": x, "y": y}),
        ("neg", lambda p: nm.sum_(nm.neg(p["x"])), {"x": x}),
        ("matmul", lambda p: nm.sum_(nm.matmul(p["a"], p["b"])),
         {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))}),
        ("sigmoid", lambda p: nm.sum_(nm.sigmoid(p["x"])), {"x": x}),
        ("tanh", lambda p: nm.sum_(nm.tanh(p["x"])), {"x": x}),
        ("relu", lambda p: nm.sum_(nm.relu(p["x"])),
         {"x": x + np.sign(x) * 0.05}),
        ("exp", lambda p: nm.sum_(nm.exp(p["x"])), {"x": x}),
        ("log", lambda p: nm.sum_(nm.log(p["x"])), {"x": np.abs(x) + 0.5}),
        ("pow", lambda p: nm.sum_(nm.pow_scalar(p["x"], -0.5)),
         {"x": np.abs(x) + 0.5}),
        ("clip_min", lambda p: nm.sum_(nm.clip_min(p["x"], 0.3)),
         {"x": np.abs(x) + 0.5}),
        ("softmax", lambda p: nm.sum_(nm.mul(nm.softmax(p["x"], axis=-1), p["y"])),
         {"x": x, "y": y}),
        ("sum_axis", lambda p: nm.sum_(nm.mul(nm.sum_(p["x"], axis=0, keepdims=True), 2.0)),
         {"x": x}),
        ("mean_axis", lambda p: nm.sum_(nm.mul(nm.mean_(p["x"], axis=1, keepdims=True), 3.0)),
         {"x": x}),
        ("concat", lambda p: nm.sum_(nm.mul(nm.concat([p["x"], p["y"]], axis=1), mix)),
         {"x": x, "y": y}),
        ("take", lambda p: nm.sum_(p["x"][1:, 0:2]), {"x": x}),
        ("reshape", lambda p: nm.sum_(nm.mul(nm.reshape(p["x"], (4, 3)), mix43)),
         {"x": x}),
        ("transpose", lambda p: nm.sum_(nm.mul(nm.transpose(p["x"]), mix43)),
         {"x": x}),
        ("gather_rows", lambda p: nm.sum_(nm.gather_rows(p["x"], [0, 2, 2, 1])),
         {"x": x}),
        ("conv1d", lambda p: nm.sum_(nm.conv1d_rows(p["x"], p["k"])),
         {"x": x, "k": rng.normal(size=2)}),
        ("broadcast_bias", lambda p: nm.sum_(nm.add(p["x"], p["b"])),
         {"x": x, "b": rng.normal(size=(1, 4))}),
    ]


def _fusion_grad_cases(rng):
    f = rng.normal(size=(2, 5))
    embed_arrays = {"f": f, "w_e": rng.normal(size=(5, 6)), "b_e": rng.normal(size=(1, 6))}
    conv_arrays = {"e": rng.normal(size=(2, 6)), "w_c": rng.normal(size=3),
                   "b_c": rng.normal(size=(1, 1))}
    att_arrays = {"q": rng.normal(size=(2, 4)),
                  "f1": rng.normal(size=(2, 4)), "f2": rng.normal(size=(2, 4)),
                  "f3": rng.normal(size=(2, 4))}
    fuse_arrays = {"o": rng.normal(size=(2, 4)), "c": rng.normal(size=(2, 6)),
                   "proj_w": rng.normal(size=(6, 4)), "proj_b": rng.normal(size=(1, 4)),
                   "gamma_raw": rng.normal(size=(1, 1))}

    def build_embed(p):
        return nm.sum_(fusion.embed(p["f"], {"w_e": p["w_e"], "b_e": p["b_e"]}))

    def build_conv(p):
        return nm.sum_(fusion.conv_text(p["e"], {"w_c": p["w_c"], "b_c": p["b_c"]}))

    def build_att(p):
        alpha, ctx = fusion.attention_over_features(p["q"], [p["f1"], p["f2"], p["f3"]])
        return nm.sum_(nm.add(nm.sum_(alpha), nm.sum_(ctx)))

    def build_fuse(p):
        out = fusion.fuse(p["o"], p["c"], {"proj_w": p["proj_w"], "proj_b": p["proj_b"],
                                           "gamma_raw": p["gamma_raw"]})
        return nm.sum_(out)

    return [("fusion.embed", build_embed, embed_arrays),
            ("fusion.conv_text", build_conv, conv_arrays),
            ("fusion.attention", build_att, att_arrays),
            ("fusion.fuse", build_fuse, fuse_arrays)]


def _encoder_grad_cases(rng):
    d = 4
    x = rng.normal(size=(3, d))
    mha_arrays = {"x": x, **{w: rng.normal(size=(d, d))
                             for w in ("wq", "wk", "wv", "wo")}}
    ln_arrays = {"x": rng.normal(size=(3, d)) * 2.0,
                 "g": rng.normal(size=(1, d)), "b": rng.normal(size=(1, d))}
    att_arrays = {"q": rng.normal(size=(3, 2)), "k": rng.normal(size=(3, 2)),
                  "v": rng.normal(size=(3, 2))}

    def build_attention(p):
        return nm.sum_(enc.self_attention(p["q"], p["k"], p["v"]))

    def build_mha(p):
        params = {w: p[w] for w in ("wq", "wk", "wv", "wo")}
        return nm.sum_(enc.multi_head_attention(p["x"], params, heads=2))

    def build_ln(p):
        return nm.sum_(enc.layer_norm(p["x"], p["g"], p["b"]))

    return [("encoder.self_attention", build_attention, att_arrays),
            ("encoder.mha", build_mha, mha_arrays),
            ("encoder.layer_norm", build_ln, ln_arrays)]


def _full_encoder_grad_case(seed):
    config = enc.EncoderConfig(d_model=8, heads=2, layers=2, d_ff=16, max_len=10)
    corpus = ["alpha beta gamma delta", "beta delta alpha epsilon"]
    vocab = enc.Vocabulary.build(corpus)
    rng = np.random.default_rng(seed)
    params = enc.init_encoder_params(config, vocab.size, rng)
    tokens = enc.tokenize("alpha beta gamma delta epsilon", vocab, config.max_len)
    corrupted, positions, targets = enc.similar_word_mask(tokens, vocab,
                                                 np.random.default_rng(seed + 1), 0.3)
    arrays = {name: params[name].data.copy() for name in params.names()}

    def build(p):
        store = ParameterStore()
        for name in arrays:
            store._params[name] = p[name]
        rows, _ = enc.encode_text(corrupted, config, store)
        return enc.mlm_loss(enc.mlm_predictions(rows, positions, store),
                            positions, targets)

    return ("encoder.full_mlm", build, arrays)


def _cell_grad_cases(rng, steps):
    hid, inp = 4, 2
    rows = hid + inp
    xs = [rng.normal(size=(2, inp)) for _ in range(steps)]

    def gates(prefix="", extra=()):
        arrays = {}
        for g in ("w_i", "w_f", "w_c", "w_o"):
            arrays[prefix + g] = rng.normal(size=(rows, hid))
            arrays[prefix + g.replace("w", "b")] = rng.normal(size=(1, hid))
        for name, shape in extra:
            arrays[prefix + name] = rng.normal(size=shape)
        return arrays

    cases = []

    def unroll_case(kind, arrays, runner):
        def build(p):
            return nm.sum_(runner(p))
        cases.append((f"cell.{kind}.{steps}steps", build,
                      {**arrays, **{f"x{i}": xs[i] for i in range(steps)}}))

    def run_lstm(p):
        h = c = Tensor(np.zeros((2, hid)))
        for i in range(steps):
            h, c = models.lstm_cell(p[f"x{i}"], h, c, p)
        return h

    unroll_case("lstm", gates(), run_lstm)

    gru_arrays = {}
    for g in ("w_z", "w_r", "w_h"):
        gru_arrays[g] = rng.normal(size=(rows, hid))
        gru_arrays[g.replace("w", "b")] = rng.normal(size=(1, hid))

    def run_gru(p):
        h = Tensor(np.zeros((2, hid)))
        for i in range(steps):
            h = models.gru_cell(p[f"x{i}"], h, p)
        return h

    unroll_case("gru", gru_arrays, run_gru)

    mog_arrays = gates(extra=(("q", (hid, inp)), ("r", (inp, hid))))

    def run_mog(p):
        h = c = Tensor(np.zeros((2, hid)))
        for i in range(steps):
            h, c = models.mogrifier_lstm_cell(p[f"x{i}"], h, c, p, rounds=3)
        return h

    unroll_case("mogrifier", mog_arrays, run_mog)

    st_arrays = gates()
    for g in ("w_mi", "w_mf", "w_mc"):
        st_arrays[g] = rng.normal(size=(inp + hid, hid))
        st_arrays[g.replace("w", "b")] = rng.normal(size=(1, hid))
    st_arrays["w_mix"] = rng.normal(size=(2 * hid, hid))

    def run_st(p):
        h = c = m = Tensor(np.zeros((2, hid)))
        for i in range(steps):
            h, c, m = models.stlstm_cell(p[f"x{i}"], h, c, m, p)
        return h

    unroll_case("stlstm", st_arrays, run_st)

    window = 2
    swin_arrays = {name: rng.normal(size=(1, 1)) for name in ("wq", "wk", "wv", "wp")}
    for g in ("w_i", "w_f", "w_c", "w_o"):
        swin_arrays[g] = rng.normal(size=(hid + window, hid))
        swin_arrays[g.replace("w", "b")] = rng.normal(size=(1, hid))
    swin_xs = {f"x{i}": rng.normal(size=(2, 4)) for i in range(steps)}

    def run_swin(p):
        h = c = Tensor(np.zeros((2, hid)))
        for i in range(steps):
            h, c = models.swinlstm_cell(p[f"x{i}"], h, c, p, window=window)
        return h

    def build_swin(p):
        return nm.sum_(run_swin(p))

    cases.append((f"cell.swinlstm.{steps}steps", build_swin,
                  {**swin_arrays, **swin_xs}))

    bi_arrays = {**gates("fwd."), **gates("bwd.")}

    def run_bi(p):
        fwd = {k[4:]: v for k, v in p.items() if k.startswith("fwd.")}
        bwd = {k[4:]: v for k, v in p.items() if k.startswith("bwd.")}
        return models.bilstm_forward([p[f"x{i}"] for i in range(steps)], fwd, bwd)

    unroll_case("bilstm", bi_arrays, run_bi)
    return cases


def _pipeline_grad_case(kind, seed):
    samples = synthetic.markov_samples(5, 5, seed=seed, feature_len=6)
    cfg = tr.TrainConfig(epochs=1, batch_size=5, seed=seed, window=5, feature_len=6,
                         embed_width=6, kernel_len=2,
                         model=ModelSpec(kind=kind, hidden=4, mogrifier_rounds=3,
                                         swin_window=2))
    store = tr.init_pipeline_params(cfg)
    priors, prices, texts, targets = tr.batch_arrays(samples, True)
    arrays = {name: store[name].data.copy() for name in store.names()}

    def build(p):
        sub = ParameterStore()
        for name in arrays:
            sub._params[name] = p[name]
        prob = tr.forward_batch(sub, cfg, priors, prices, texts)
        return tr.bce_loss(prob, targets)

    return (f"pipeline.{kind}", build, arrays)


def test_criterion_1_gradient_suite():
    start = time.time()
    configs = 0
    for seed in range(4):
        rng = np.random.default_rng(1000 + seed)
        for label, build, arrays in _primitive_grad_cases(rng):
            configs += _check_grad_case(build, arrays, f"{label}#s{seed}")
    for seed in range(2):
        rng = np.random.default_rng(2000 + seed)
        for label, build, arrays in _fusion_grad_cases(rng):
            configs += _check_grad_case(build, arrays, f"{label}#s{seed}")
        for label, build, arrays in _encoder_grad_cases(rng):
            configs += _check_grad_case(build, arrays, f"{label}#s{seed}")
        for steps in (1, 3):
            for label, build, arrays in _cell_grad_cases(
                    np.random.default_rng(3000 + 10 * seed + steps), steps):
                configs += _check_grad_case(build, arrays, f"{label}#s{seed}")
    label, build, arrays = _full_encoder_grad_case(4000)
    configs += _check_grad_case(build, arrays, label)
    for kind in VALID_KINDS:
        label, build, arrays = _pipeline_grad_case(kind, 5000)
        configs += _check_grad_case(build, arrays, label)
    elapsed = time.time() - start
    assert configs >= 100, f"only {configs} configurations checked"
    assert elapsed < 120, f"gradient suite took {elapsed:.0f}s"
    _passed(1, f"gradient suite ({configs} configs, {elapsed:.0f}s, tol {GRAD_TOL})")


# --- criterion 2: reduction identities ------------------------------------


def test_criterion_2_reduction_identities():
    rng = np.random.default_rng(7)
    hid, inp = 4, 2
    rows = hid + inp

    def gate_tensors(rows_):
        out = {}
        for g in ("w_i", "w_f", "w_c", "w_o"):
            out[g] = Tensor(rng.normal(size=(rows_, hid)))
            out[g.replace("w", "b")] = Tensor(rng.normal(size=(1, hid)))
        return out

    params = gate_tensors(rows)
    x = Tensor(rng.normal(size=(2, inp)))
    h0 = Tensor(rng.normal(size=(2, hid)))
    c0 = Tensor(rng.normal(size=(2, hid)))
    h_ref, c_ref = models.lstm_cell(x, h0, c0, params)

    hm, cm = models.mogrifier_lstm_cell(x, h0, c0, params, rounds=0)
    assert np.array_equal(hm.data, h_ref.data) and np.array_equal(cm.data, c_ref.data)

    qr = dict(params)
    qr["q"] = Tensor(np.zeros((hid, inp)))
    qr["r"] = Tensor(np.zeros((inp, hid)))
    hq, cq = models.mogrifier_lstm_cell(x, h0, c0, qr, rounds=4)
    assert np.max(np.abs(hq.data - h_ref.data)) < 1e-12
    assert np.max(np.abs(cq.data - c_ref.data)) < 1e-12

    st = dict(params)
    for g in ("w_mi", "w_mf", "w_mc"):
        st[g] = Tensor(np.zeros((inp + hid, hid)))
        st[g.replace("w", "b")] = Tensor(np.zeros((1, hid)))
    st["w_mix"] = Tensor(np.vstack([np.eye(hid), np.zeros((hid, hid))]))
    hs, cs, _ = models.stlstm_cell(x, h0, c0, Tensor(np.zeros((2, hid))), st)
    assert np.max(np.abs(hs.data - h_ref.data)) < 1e-12
    assert np.max(np.abs(cs.data - c_ref.data)) < 1e-12

    window = 2
    swin = {name: Tensor(rng.normal(size=(1, 1))) for name in ("wq", "wk", "wv")}
    swin["wp"] = Tensor(np.zeros((1, 1)))
    swin.update(gate_tensors(hid + window))
    feats = Tensor(rng.normal(size=(2, 6)))
    hw, cw = models.swinlstm_cell(feats, h0, c0, swin, window=window)
    pooled = Tensor(feats.data.reshape(2, 3, 2).mean(axis=1))
    hp, cp = models.lstm_cell(pooled, h0, c0, swin)
    assert np.max(np.abs(hw.data - hp.data)) < 1e-12
    assert np.max(np.abs(cw.data - cp.data)) < 1e-12
    _passed(2, "reduction identities (mogrifier/stlstm/swinlstm vs LSTM)")


# --- criterion 3: normalization laws ---------------------------------------


def test_criterion_3_normalization_laws():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(1000, 9)) * 4.0
    sums = nm.softmax(Tensor(x), axis=-1).data.sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) < 1e-9

    for i in range(0, 1000, 100):
        q = Tensor(rng.normal(size=(100, 5)))
        feats = [Tensor(rng.normal(size=(100, 5))) for _ in range(4)]
        alpha, _ = fusion.attention_over_features(q, feats)
        assert np.max(np.abs(alpha.data.sum(axis=1) - 1.0)) < 1e-9

    pe = enc.positional_encoding(64, 12)
    assert np.array_equal(pe[0, 0::2], np.zeros(6))
    assert np.array_equal(pe[0, 1::2], np.ones(6))
    assert np.all((pe >= -1.0) & (pe <= 1.0))

    rows = rng.normal(size=(1000, 8)) * 3.0 + 1.0
    out = enc.layer_norm(Tensor(rows), Tensor(np.ones((1, 8))),
                         Tensor(np.zeros((1, 8)))).data
    assert np.max(np.abs(out.mean(axis=1))) < 1e-9
    assert np.max(np.abs(out.std(axis=1) - 1.0)) < 1e-9
    _passed(3, "normalization laws (softmax, attention weights, PE, layer norm)")


# --- criterion 4: metric oracle ---------------------------------------------


def test_criterion_4_metric_oracle():
    rng = np.random.default_rng(13)
    for case in range(1000):
        n = int(rng.integers(1, 40))
        if case % 5 == 0:
            labels = np.zeros(n, dtype=int)   # forces tp + fp == 0
        elif case % 5 == 1:
            labels = np.ones(n, dtype=int)
        else:
            labels = rng.integers(0, 2, size=n)
        if case % 7 == 0:
            targets = np.zeros(n, dtype=int)  # forces tp + fn == 0
        else:
            targets = rng.integers(0, 2, size=n)
        report = tr.confusion_report(labels, targets)
        tp, fp, tn, fn = confusion_counts(labels, targets)
        assert (report.tp, report.fp, report.tn, report.fn) == (tp, fp, tn, fn)
        assert report.accuracy == (tp + tn) / n
        assert report.precision == (tp / (tp + fp) if tp + fp else 0.0)
        assert report.recall == (tp / (tp + fn) if tp + fn else 0.0)
        if report.precision + report.recall:
            harmonic = (2 * report.precision * report.recall
                        / (report.precision + report.recall))
            assert abs(report.f1 - harmonic) < 1e-12
        else:
            assert report.f1 == 0.0

    f1, recall = 0.7428, 0.8125
    precision = f1 * recall / (2 * recall - f1)
    assert abs(precision - 0.6842) < 1e-3
    assert abs(2 * precision * recall / (precision + recall) - f1) < 1e-12
    _passed(4, f"metric oracle (1000 sets; derived precision {precision:.4f})")


# --- criterion 5: learnability ----------------------------------------------


def test_criterion_5_learnability():
    start = time.time()
    samples = synthetic.periodic_pattern_samples(64, 6, feature_len=8)
    results = {}
    for kind in VALID_KINDS:
        cfg = tr.TrainConfig(epochs=400, batch_size=32, lr=1e-3, seed=3, window=6,
                             feature_len=8, embed_width=8, kernel_len=3,
                             model=ModelSpec(kind=kind, hidden=16))
        store, _ = tr.train_model(samples, cfg)
        report = tr.evaluate(store, cfg, samples)
        results[kind] = report.accuracy
        assert report.accuracy >= 0.95, f"{kind}: train accuracy {report.accuracy:.3f}"
    elapsed = time.time() - start
    assert elapsed < 300, f"learnability suite took {elapsed:.0f}s"
    summary = ", ".join(f"{k}={v:.2f}" for k, v in results.items())
    _passed(5, f"learnability 400ep/lr1e-3/batch32 ({summary}; {elapsed:.0f}s)")


# --- criterion 6: ablation direction ----------------------------------------


def test_criterion_6_ablation_direction():
    for kind in ("feedforward", "lstm"):
        wins = 0
        for seed in range(10):
            samples = synthetic.markov_samples(160, 6, seed=100 + seed,
                                               persistence=0.85, feature_len=8)
            train_s, test_s = ingest.split_train_test(samples, 0.8)
            cfg = tr.TrainConfig(epochs=300, batch_size=32, lr=1e-3, seed=seed,
                                 window=6, feature_len=8, embed_width=8, kernel_len=3,
                                 model=ModelSpec(kind=kind, hidden=8))
            _, _, deltas = tr.ablate_prior_effect(train_s, test_s, cfg)
            wins += deltas["f1_delta"] > 0
        assert wins >= 8, f"{kind}: prior effect improved F1 on only {wins}/10 seeds"
        print(f"  criterion 6 {kind}: {wins}/10 seeds improved", flush=True)
    _passed(6, "ablation direction (with-prior F1 > without on >= 8/10 seeds)")


# --- criterion 7: pipeline determinism ---------------------------------------


def test_criterion_7_pipeline_determinism(tmp_path):
    market = tmp_path / "market.csv"
    synthetic.write_markov_market_csv(market, 70, seed=21, persistence=0.85)
    base = ["--market", str(market), "--epochs", "6", "--seed", "4",
            "--window", "5", "--feature-len", "6", "--hidden", "6",
            "--model", "lstm"]
    train_artifacts = ("checkpoint.json", "loss.csv", "metrics.json",
                       "predictions.csv", "run.json")
    for command, artifacts in (("train", train_artifacts),
                               ("ablate", ("ablation.csv",
                                           "ablation_feedforward_with.json",
                                           "ablation_lstm_with.json",
                                           "ablation_lstm_without.json"))):
        out_a = tmp_path / f"{command}_a"
        out_b = tmp_path / f"{command}_b"
        assert cli.main([command, *base, "--out", str(out_a)]) == 0
        assert cli.main([command, *base, "--out", str(out_b)]) == 0
        for name in artifacts:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    _passed(7, "pipeline determinism (train and ablate byte-identical reruns)")


# --- criterion 8: preprocessing laws ------------------------------------------


def test_criterion_8_preprocessing_laws():
    rng = np.random.default_rng(17)
    for t in range(2, 201):
        samples = list(range(t))
        train, test = ingest.split_train_test(samples, 0.8)
        assert len(train) == math.floor(0.8 * t)
        assert len(test) == t - len(train)

    for t in (2, 3, 7, 37, 120, 200):
        chgs = [(-1.0) ** i * (1.0 + (i % 5)) for i in range(t)]
        records = synthetic._dates(t)
        series = ingest.MarketSeries(tuple(
            ingest.MarketRecord(d, chg, 1.0, 1.0, 1.0)
            for d, chg in zip(records, chgs)))
        labeled = ingest.to_binary_labels(series)
        for n in (2, 3, 6):
            if t >= n:
                assert len(ingest.make_windows(labeled, n, feature_len=2)) == t - n + 1

    for _ in range(100):
        size = int(rng.integers(2, 50))
        values = rng.normal(size=size) * rng.uniform(0.1, 100)
        if values.max() > values.min():
            out = ingest.minmax_normalize(values)
            assert out.min() == 0.0 and out.max() == 1.0
        if values.std() > 0:
            z = ingest.zscore_normalize(values)
            assert abs(z.mean()) < 1e-12
            assert abs(z.std() - 1.0) < 1e-12
    _passed(8, "preprocessing laws (split sizes, window counts, normalizers)")


# --- criterion 9: masked-recovery pretraining sanity ---------------------------


def test_criterion_9_mlm_sanity():
    corpus = synthetic.toy_corpus(20, seed=7)
    assert len(corpus) == 20
    config = enc.EncoderConfig(d_model=16, heads=2, layers=2, d_ff=32, max_len=12)
    _, vocab, trace = enc.pretrain_mlm(corpus, config, epochs=50, seed=3)
    assert len(trace) == 50
    assert trace[-1] < trace[0], f"loss {trace[0]:.4f} -> {trace[-1]:.4f} did not decrease"

    n, v = 4, 9
    uniform = Tensor(np.full((n, v), 1.0 / v))
    loss = enc.mlm_loss(uniform, np.arange(n), np.zeros(n, dtype=int))
    assert abs(loss.item() - n * math.log(v)) < 1e-9
    print(f"  criterion 9 loss trace: {trace[0]:.4f} -> {trace[-1]:.4f}", flush=True)
    _passed(9, "masked-recovery sanity (strict decrease; uniform loss = N ln V)")
