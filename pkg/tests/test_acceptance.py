"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (shown even when pytest
captures output) before asserting. Run just these with::

    pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest

from tacoma.cli import main as cli_main
from tacoma.cotrain import thin_split, natural_split
from tacoma.forest import Dataset, ForestParams, accuracy, oob_error, train_forest
from tacoma.glcm import DIRECTIONS, SpatialRelationship, compute_glcm, offset_of
from tacoma.pipeline import (
    corpus_features,
    feature_blocks,
    masks_from_patches,
    paired_semi_supervised,
    train_test_split,
)
from tacoma.raster import QuantizedImage, quantize
from tacoma.salience import top_salient
from tacoma.synth import SynthConfig, synth_corpus, synth_patches
from tacoma.theory import (
    MixtureSpec,
    cholesky,
    make_cov,
    mc_gamma,
    normal_cdf,
    ratio_of_separation,
    separation,
)

LEVELS = 51
NE3 = SpatialRelationship("ne", 3)
SE1 = SpatialRelationship("se", 1)


@pytest.fixture
def report(capsys):
    def emit(name: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok

    return emit


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    """Compile (or load cached) numeric kernels so timings measure the work itself."""
    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(size=(20, 3)), rng.integers(0, 2, 20), 2)
    train_forest(data, ForestParams(2)).votes(data.features)
    ratio_of_separation(np.ones(6), make_cov("tridiagonal", 6, 0.6, require_pd=False), [0, 1])
    ratio_of_separation(np.ones(4), np.eye(4), [0, 1])


@pytest.fixture(scope="module")
def default_corpus():
    cfg = SynthConfig()
    corpus = synth_corpus(cfg)
    patches = synth_patches(cfg)
    return corpus, patches


# -- theory -------------------------------------------------------------------


def test_separation_example(report):
    t0 = time.perf_counter()
    sigma = make_cov("tridiagonal", 100, 0.6, require_pd=False)
    r = ratio_of_separation(np.ones(100), sigma, np.arange(50))
    elapsed = time.perf_counter() - t0
    checks = [
        abs(r.s_full - 45.87) <= 0.01,
        abs(r.s_subset - 23.32) <= 0.01,
        abs(r.gamma - 0.5084) <= 0.0005,
        abs(r.bayes_full - 3.54e-4) <= 0.02 * 3.54e-4,
        abs(r.bayes_subset - 7.87e-3) <= 0.02 * 7.87e-3,
        elapsed < 1.0,
    ]
    ok = report(
        "separation example",
        all(checks),
        f"S_full={r.s_full:.4f} S_subset={r.s_subset:.4f} gamma={r.gamma:.5f} "
        f"bayes={r.bayes_full:.4e}/{r.bayes_subset:.4e} time={elapsed:.3f}s",
    )
    assert ok


def test_thinned_slice_separation(report):
    t0 = time.perf_counter()
    mins, below = {}, {}
    for p in (250, 1000, 4000):
        spec = MixtureSpec(np.ones(p), make_cov("tridiagonal", p, 0.6, require_pd=False))
        g = mc_gamma(spec, 2, 200, seed=p)
        mins[p] = g.min
        below[p] = float(np.mean(g.samples < 0.45))
    elapsed = time.perf_counter() - t0
    frac = [below[p] for p in (250, 1000, 4000)]
    ok = mins[4000] >= 0.45 and all(a >= b for a, b in zip(frac, frac[1:])) and elapsed < 60
    detail = " ".join(f"p={p}:min={mins[p]:.4f},below={below[p]:.3f}" for p in mins)
    assert report("thinned slice separation", ok, f"{detail} time={elapsed:.1f}s")


def test_numeric_kernels(report):
    rng = np.random.default_rng(2024)
    worst_chol = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 51))
        B = rng.normal(size=(p, p))
        S = B @ B.T + p * np.eye(p)
        H = cholesky(S)
        worst_chol = max(worst_chol, np.max(np.abs(H @ H.T - S)) / np.max(np.abs(S)))
    xs = rng.uniform(-40, 40, size=2000)
    worst_refl = max(abs(normal_cdf(-x) - (1 - normal_cdf(x))) for x in xs)
    worst_sep = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 21))
        B = rng.normal(size=(p, p))
        S = B @ B.T + p * np.eye(p)
        u = rng.normal(size=p)
        ref = u @ _gauss_jordan_inverse(S) @ u
        worst_sep = max(worst_sep, abs(separation(u, S) - ref) / abs(ref))
    ok = worst_chol <= 1e-10 and worst_refl <= 1e-12 and worst_sep <= 1e-8
    assert report(
        "numeric kernels",
        ok,
        f"cholesky={worst_chol:.2e} reflection={worst_refl:.2e} separation={worst_sep:.2e}",
    )


def _gauss_jordan_inverse(A):
    n = A.shape[0]
    M = np.hstack([A.astype(float), np.eye(n)])
    for c in range(n):
        r = c + int(np.argmax(np.abs(M[c:, c])))
        M[[c, r]] = M[[r, c]]
        M[c] /= M[c, c]
        for k in range(n):
            if k != c:
                M[k] -= M[k, c] * M[c]
    return M[:, n:]


# -- GLCM ---------------------------------------------------------------------


def _naive_glcm(px, g, dx, dy):
    """Enumerate every in-bounds pixel pair explicitly and count each (a, b) cell."""
    h, w = px.shape
    ys, xs = np.mgrid[0:h, 0:w]
    ys, xs = ys.ravel(), xs.ravel()
    ok = (xs + dx >= 0) & (xs + dx < w) & (ys + dy >= 0) & (ys + dy < h)
    src = px[ys[ok], xs[ok]]
    dst = px[ys[ok] + dy, xs[ok] + dx]
    out = np.zeros((g, g), dtype=np.int64)
    for a in range(1, g + 1):
        for b in range(1, g + 1):
            out[a - 1, b - 1] = np.count_nonzero((src == a) & (dst == b))
    return out


def test_glcm_oracle(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mismatches = transposes = cases = 0
    for _ in range(500):
        g = int(rng.integers(2, 9))
        img = QuantizedImage(rng.integers(1, g + 1, size=(rng.integers(1, 17), rng.integers(1, 17))), g)
        for d in (1, 2, 3):
            counts = {}
            for direction in DIRECTIONS:
                rel = SpatialRelationship(direction, d)
                counts[direction] = compute_glcm(img, rel).counts
                mismatches += not np.array_equal(counts[direction], _naive_glcm(img.pixels, g, *offset_of(rel)))
                cases += 1
            for direction in DIRECTIONS:
                opposite = SpatialRelationship(direction, d).opposite().direction
                transposes += not np.array_equal(counts[direction], counts[opposite].T)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and transposes == 0 and elapsed < 10
    assert report(
        "GLCM oracle equivalence",
        ok,
        f"cases={cases} mismatches={mismatches} transpose_failures={transposes} time={elapsed:.2f}s",
    )


# -- forest -------------------------------------------------------------------


def _gaussians(rng, n, sep):
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, 2))
    X[:, 0] += sep * y
    return Dataset(X, y, 2)


def test_forest_determinism_and_sanity(report):
    rng = np.random.default_rng(11)
    noisy = _gaussians(rng, 300, 1.0)
    a = train_forest(noisy, ForestParams(60, seed=3), n_jobs=1)
    same = all(train_forest(noisy, ForestParams(60, seed=3), n_jobs=j).to_json() == a.to_json() for j in (2, 4, 7))

    sep_train, sep_test = _gaussians(rng, 200, 6.0), _gaussians(rng, 2000, 6.0)
    acc = accuracy(train_forest(sep_train, ForestParams(200, seed=0)), sep_test)

    tr, te = _gaussians(rng, 300, 2.5), _gaussians(rng, 3000, 2.5)
    f500 = train_forest(tr, ForestParams(500, seed=1))
    oob = oob_error(f500, tr).error
    held = 1 - accuracy(f500, te)

    C = 4
    noise = Dataset(rng.normal(size=(400, 5)), rng.integers(0, C, 400), C)
    noise_oob = oob_error(train_forest(noise, ForestParams(200, seed=2)), noise).error

    ok = same and acc >= 0.95 and abs(oob - held) <= 0.05 and abs(noise_oob - (1 - 1 / C)) <= 0.05
    assert report(
        "forest determinism and sanity",
        ok,
        f"bit_identical={same} separable_acc={acc:.4f} oob={oob:.4f} heldout={held:.4f} "
        f"noise_oob={noise_oob:.4f} (target {1 - 1 / C:.2f})",
    )


# -- end to end ---------------------------------------------------------------


def test_end_to_end_pipeline(report, default_corpus, tmp_path):
    t0 = time.perf_counter()
    corpus, patches = default_corpus
    assert len(patches) <= 4
    masks = masks_from_patches(patches, [NE3], LEVELS)
    data = Dataset(corpus_features(corpus.images, [NE3], masks, LEVELS), corpus.labels, 4)
    train, test = train_test_split(data.n, 0.2, np.random.default_rng(0))
    forest = train_forest(data.subset(train), ForestParams(200, seed=0))
    acc = accuracy(forest, data.subset(test))

    # learning curve through the command-line driver on a feature file
    from tacoma.cli import FeatureTable

    FeatureTable(data.features, data.labels, ["ne3"], [(0, data.p)], [masks[0].identity()], LEVELS).write(
        tmp_path / "f.csv"
    )
    import contextlib
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main(
            ["learning-curve", "--features", str(tmp_path / "f.csv"), "--sizes", "10,30,100,160",
             "--repeats", "20", "--trees", "200", "--seed", "0", "--figure", str(tmp_path / "lc.png")]
        )
    med = [float(line.split("median_error=")[1]) for line in buf.getvalue().splitlines()]
    monotone = all(a >= b for a, b in zip(med, med[1:]))
    elapsed = time.perf_counter() - t0
    ok = code == 0 and acc >= 0.90 and monotone and len(med) == 4 and elapsed < 300
    assert report(
        "end-to-end synthetic pipeline",
        ok,
        f"heldout_acc={acc:.4f} median_errors={[round(m, 4) for m in med]} time={elapsed:.1f}s",
    )


def test_salience_precision(report, default_corpus):
    corpus, patches = default_corpus
    masks = masks_from_patches(patches, [NE3], LEVELS)
    data = Dataset(corpus_features(corpus.images, [NE3], masks, LEVELS), corpus.labels, 4)
    train, _ = train_test_split(data.n, 0.2, np.random.default_rng(0))
    forest = train_forest(data.subset(train), ForestParams(200, seed=0))
    inside = flagged = 0
    counts = {c: [] for c in range(4)}
    for img, lab, blob in zip(corpus.images, corpus.labels, corpus.blob_masks):
        smap = top_salient(quantize(img, LEVELS), NE3, forest, masks[0], 20)
        inside += int((smap.flags & blob).sum())
        flagged += smap.count
        counts[int(lab)].append(smap.count)
    prec = inside / flagged
    c0, c3 = np.mean(counts[0]), np.mean(counts[3])
    ok = prec >= 0.70 and c0 < 0.10 * c3
    assert report(
        "salience precision",
        ok,
        f"precision={prec:.4f} mean_flagged_class0={c0:.1f} mean_flagged_class3={c3:.1f}",
    )


# -- co-training --------------------------------------------------------------


@pytest.mark.slow
def test_cotraining_gain(report, default_corpus):
    t0 = time.perf_counter()
    corpus, patches = default_corpus
    masks = masks_from_patches(patches, [NE3, SE1], LEVELS)
    data = Dataset(corpus_features(corpus.images, [NE3, SE1], masks, LEVELS), corpus.labels, 4)
    nat = natural_split(feature_blocks(masks))
    params = ForestParams(50)

    def thinned(seed, J):
        split = thin_split(data.p, J, [seed, 1])
        i, j = np.random.default_rng([seed, 2]).choice(J, size=2, replace=False)
        return split.pick(int(i), int(j))

    schemes = {
        "natural": lambda s: nat,
        "thin2": lambda s: thinned(s, 2),
        "thin3": lambda s: thinned(s, 3),
    }
    wins, means = {}, {}
    for name, make in schemes.items():
        runs = [paired_semi_supervised(data, 30, seed, params, make(seed)) for seed in range(100)]
        sup = np.array([r.supervised_error for r in runs])
        semi = np.array([r.semi_error for r in runs])
        wins[name] = float(np.mean(semi <= sup))
        means[name] = (float(sup.mean()), float(semi.mean()))
    elapsed = time.perf_counter() - t0
    gaps = {k: abs(means[k][1] - means["natural"][1]) for k in ("thin2", "thin3")}
    ok = all(w >= 0.80 for w in wins.values()) and all(g <= 0.02 for g in gaps.values()) and elapsed < 900
    detail = " ".join(
        f"{k}:win_or_tie={wins[k]:.2f},sup={means[k][0]:.4f},co={means[k][1]:.4f}" for k in schemes
    )
    gap_text = " ".join(f"gap_{k}={v * 100:.2f}pt" for k, v in gaps.items())
    assert report("co-training gain", ok, f"{detail} {gap_text} time={elapsed:.0f}s")
