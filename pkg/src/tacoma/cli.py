"""Command-line interface.

Every command prints ``key=value`` result lines on stdout. Exit status is 0
on success, 2 for usage or input errors and 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plotting
from .cotrain import FeatureSplit, natural_split, sample_labeled, self_train, cotrain, thin_split
from .forest import (
    MTRY_GRID,
    TREE_GRID,
    Dataset,
    Forest,
    ForestParams,
    importance_ranking,
    mtry_from_name,
    oob_error,
    train_forest,
)
from .glcm import SpatialRelationship, extract_features, parse_relationships
from .mask import FeatureMask, build_mask
from .pipeline import learning_curve, median_errors
from .raster import PGMError, load_pgm, quantize, save_pgm, GrayImage
from .salience import render_overlay, top_features, salient_pixels
from .synth import SynthConfig, synth_corpus, synth_patches
from .theory import MixtureSpec, mc_gamma, parse_cov, ratio_of_separation

log = logging.getLogger("tacoma")

FEATURES_FORMAT = "tacoma-features-v1"
UNKNOWN = "?"


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit status 2."""


def emit(**kv) -> None:
    for k, v in kv.items():
        if isinstance(v, float):
            v = f"{v:.10g}"
        print(f"{k}={v}")


# -- on-disk formats ---------------------------------------------------------


def read_manifest(path) -> list[tuple[Path, int | None]]:
    """Rows of (image path, label or None); relative paths resolve against the manifest."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["path", "label"]:
            raise UsageError(f"{path}: manifest header must be 'path,label'")
        rows = []
        for i, rec in enumerate(reader, start=2):
            p = Path(rec["path"].strip())
            lab = rec["label"].strip()
            if lab == UNKNOWN:
                label = None
            else:
                try:
                    label = int(lab)
                except ValueError:
                    raise UsageError(f"{path}:{i}: label {lab!r} is neither an integer nor '?'") from None
                if label < 0:
                    raise UsageError(f"{path}:{i}: negative label")
            rows.append((p if p.is_absolute() else base / p, label))
    if not rows:
        raise UsageError(f"{path}: manifest has no rows")
    return rows


@dataclass
class FeatureTable:
    features: np.ndarray
    labels: np.ndarray  # -1 marks an unlabeled row
    relationships: list[str]
    blocks: list[tuple[int, int]]
    mask_ids: list[str]
    levels: int

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    @property
    def unlabeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels < 0)

    def class_count(self) -> int:
        lab = self.labels[self.labels >= 0]
        if lab.size == 0:
            raise UsageError("feature table has no labeled rows")
        return int(lab.max()) + 1

    def dataset(self, rows=None) -> Dataset:
        rows = self.labeled if rows is None else np.asarray(rows)
        return Dataset(self.features[rows], self.labels[rows], self.class_count())

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(
                f"#{FEATURES_FORMAT},levels={self.levels},rels={';'.join(self.relationships)},"
                f"masks={';'.join(self.mask_ids)}\n"
            )
            fh.write("#blocks," + ",".join(f"{a}:{b}" for a, b in self.blocks) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            for lab, row in zip(self.labels, self.features):
                w.writerow([UNKNOWN if lab < 0 else int(lab)] + [_fmt(v) for v in row])

    @classmethod
    def read(cls, path) -> "FeatureTable":
        with open(path, newline="") as fh:
            head = fh.readline().rstrip("\n").split(",")
            blocks_line = fh.readline().rstrip("\n").split(",")
            if head[0] != "#" + FEATURES_FORMAT or blocks_line[0] != "#blocks":
                raise UsageError(f"{path}: not a {FEATURES_FORMAT} file")
            meta = dict(kv.split("=", 1) for kv in head[1:])
            blocks = [tuple(int(x) for x in b.split(":")) for b in blocks_line[1:]]
            labels, rows = [], []
            for rec in csv.reader(fh):
                if not rec:
                    continue
                labels.append(-1 if rec[0] == UNKNOWN else int(rec[0]))
                rows.append([float(v) for v in rec[1:]])
        X = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)
        if blocks and X.shape[0] and blocks[-1][1] != X.shape[1]:
            raise UsageError(f"{path}: block boundaries do not match the row length")
        return cls(
            X,
            np.asarray(labels, dtype=np.int32),
            meta.get("rels", "").split(";"),
            blocks,
            meta.get("masks", "").split(";"),
            int(meta.get("levels", 0)),
        )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _load_mask(path) -> FeatureMask:
    try:
        return FeatureMask.from_json(Path(path).read_text())
    except (KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: malformed mask file ({exc})") from None


def _load_model(path) -> tuple[Forest, dict]:
    try:
        doc = json.loads(Path(path).read_text())
        return Forest.from_dict(doc), doc
    except (KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: malformed model file ({exc})") from None


def _params(args, p: int) -> ForestParams:
    mtry = None if args.mtry is None else mtry_from_name(args.mtry, p)
    return ForestParams(args.trees, mtry, args.seed)


# -- commands -----------------------------------------------------------------


def cmd_mask(args) -> int:
    files = sorted(Path(args.patches).glob("*.pgm"))
    if not files:
        raise UsageError(f"no .pgm patches in {args.patches}")
    rel = SpatialRelationship.parse(args.rel)
    mask = build_mask([quantize(load_pgm(f), args.levels) for f in files], rel)
    Path(args.out).write_text(mask.to_json())
    emit(mask_size=len(mask), patch_count=mask.patch_count, relationship=rel.name, identity=mask.identity())
    return 0


def cmd_extract(args) -> int:
    rels = parse_relationships(args.rel)
    masks = [_load_mask(m) for m in args.mask.split(",")]
    if len(masks) == 1:
        masks = masks * len(rels)
    if len(masks) != len(rels):
        raise UsageError("give one mask per relationship, or a single mask for all")
    for m in masks:
        if m.levels != args.levels:
            raise UsageError(f"mask built for {m.levels} levels, extraction uses {args.levels}")
    rows = read_manifest(args.manifest)
    X = np.vstack(
        [extract_features(quantize(load_pgm(p), args.levels), rels, masks, args.normalize) for p, _ in rows]
    )
    bounds = np.cumsum([0] + [len(m) for m in masks])
    table = FeatureTable(
        X,
        np.asarray([-1 if lab is None else lab for _, lab in rows], dtype=np.int32),
        [r.name for r in rels],
        [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])],
        [m.identity() for m in masks],
        args.levels,
    )
    table.write(args.out)
    emit(rows=X.shape[0], features=X.shape[1], blocks=";".join(f"{a}:{b}" for a, b in table.blocks))
    return 0


def cmd_train(args) -> int:
    table = FeatureTable.read(args.features)
    rows = table.labeled
    if args.labeled is not None:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))
        rows = rows[sample_labeled(table.labels[rows], args.labeled, rng)]
    data = table.dataset(rows)
    forest = train_forest(data, _params(args, data.p), n_jobs=args.jobs)
    doc = forest.to_dict()
    doc["training_rows"] = rows.tolist()
    Path(args.out).write_text(json.dumps(doc, separators=(",", ":")) + "\n")
    oob = oob_error(forest, data)
    emit(n_train=data.n, n_features=data.p, trees=forest.n_trees, mtry=forest.mtry, oob_error=oob.error)
    return 0


def cmd_score(args) -> int:
    table = FeatureTable.read(args.features)
    forest, _ = _load_model(args.model)
    votes = forest.votes(table.features)
    pred = np.argmax(votes, axis=1)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "label", "predicted", "margin"] + [f"votes_{c}" for c in range(votes.shape[1])])
            srt = np.sort(votes, axis=1)
            for i, (lab, p, v) in enumerate(zip(table.labels, pred, votes)):
                w.writerow([i, UNKNOWN if lab < 0 else lab, p, srt[i, -1] - srt[i, -2], *v])
    lab = table.labeled
    emit(rows=len(pred))
    if lab.size:
        emit(labeled=lab.size, accuracy=float(np.mean(pred[lab] == table.labels[lab])))
    return 0


def cmd_oob(args) -> int:
    table = FeatureTable.read(args.features)
    forest, doc = _load_model(args.model)
    rows = np.asarray(doc.get("training_rows", table.labeled))
    res = oob_error(forest, table.dataset(rows))
    emit(oob_error=res.error, evaluated=res.evaluated, skipped=res.skipped)
    if args.top:
        for rank, (i, v) in enumerate(importance_ranking(forest)[: args.top], start=1):
            print(f"rank={rank} feature={i} importance={v:.10g}")
    return 0


def cmd_salient(args) -> int:
    forest, _ = _load_model(args.model)
    mask = _load_mask(args.mask)
    rel = SpatialRelationship.parse(args.rel) if args.rel else mask.relationship
    image = load_pgm(args.image)
    feats = top_features(forest, mask, args.top)
    smap = salient_pixels(quantize(image, mask.levels), rel, feats)
    if args.out:
        Path(args.out).write_text(smap.to_text())
    if args.overlay:
        save_pgm(args.overlay, render_overlay(image, smap))
    if args.figure:
        plotting.salience_figure(image, smap, args.figure)
    if args.importance_figure:
        plotting.importance_matrix(forest, mask, args.importance_figure, k=args.top)
    emit(flagged=smap.count, features=";".join(f"{a}:{b}" for a, b in feats), relationship=rel.name)
    return 0


def _split(args, table: FeatureTable, p: int) -> FeatureSplit:
    if args.split == "natural":
        if len(table.blocks) != 2:
            raise UsageError(f"natural split needs exactly two relationship blocks, file has {len(table.blocks)}")
        return natural_split(table.blocks)
    kind, _, j = args.split.partition(":")
    if kind != "thin" or not j.isdigit():
        raise UsageError("--split must be 'natural' or 'thin:J'")
    split = thin_split(p, int(j), [args.seed, 1])
    # co-training consumes two of the J slices, chosen at random
    pick = np.random.default_rng([args.seed, 2]).choice(split.parts, size=2, replace=False)
    return split.pick(int(pick[0]), int(pick[1]))


def _semi(args, mode: str) -> int:
    table = FeatureTable.read(args.features)
    params = ForestParams(args.trees, None, args.seed)
    truth = None
    if args.labeled is not None:
        # hide all but a class-covering sample of the labels
        pool = table.labeled
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))
        lab = pool[sample_labeled(table.labels[pool], args.labeled, rng)]
        unl = rng.permutation(np.setdiff1d(pool, lab))
        truth = table.labels[unl]
    else:
        lab, unl = table.labeled, table.unlabeled
    L0 = table.dataset(lab)
    U0 = table.features[unl]
    if mode == "cotrain":
        split = _split(args, table, L0.p)
        res = cotrain(L0, U0, split, params, args.m1, args.m2, seed=args.seed)
    else:
        res = self_train(L0, U0, params, m=args.m, seed=args.seed)
    emit(labeled=L0.n, unlabeled=len(unl), rounds=len(res.log))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "transferred", "predicted"])
            for r, t, p in zip(unl, res.transferred, res.labels):
                w.writerow([int(r), int(t), int(p)])
    if args.log:
        Path(args.log).write_text(json.dumps([r.as_dict() for r in res.log], indent=1) + "\n")
    if truth is not None:
        sup_params = ForestParams(args.trees, None, int(np.random.SeedSequence([args.seed, 1]).generate_state(1)[0]))
        sup = train_forest(L0, sup_params)
        sup_err = float(np.mean(sup.predict(U0) != truth))
        emit(supervised_error=sup_err, semi_error=res.error(truth))
    return 0


def cmd_cotrain(args) -> int:
    return _semi(args, "cotrain")


def cmd_selftrain(args) -> int:
    return _semi(args, "selftrain")


def _vector(text: str, p: int) -> np.ndarray:
    if text == "ones":
        return np.ones(p)
    kind, _, arg = text.partition(":")
    if kind == "const":
        return np.full(p, float(arg))
    path = Path(text)
    if path.exists():
        u = np.loadtxt(path, dtype=np.float64).ravel()
        if u.size != p:
            raise UsageError(f"{text}: expected {p} values, found {u.size}")
        return u
    raise UsageError("--u must be 'ones', 'const:c' or a file of p numbers")


def cmd_simulate(args) -> int:
    # indefinite but invertible matrices are allowed so that published examples reproduce
    spec = MixtureSpec(_vector(args.u, args.p), parse_cov(args.cov, args.p, require_pd=False))
    if not spec.positive_definite:
        log.warning("%s is not positive definite at p=%d; solving with LDL'", args.cov, args.p)
    kind, _, arg = args.subset.partition(":")
    if kind == "first":
        k = int(arg)
        if not 1 <= k <= args.p:
            raise UsageError(f"subset size must be in [1, {args.p}]")
        rep = ratio_of_separation(spec, None, np.arange(k))
        emit(
            p=rep.p,
            subset_size=rep.subset_size,
            S_full=rep.s_full,
            S_subset=rep.s_subset,
            gamma=rep.gamma,
            bayes_full=rep.bayes_full,
            bayes_subset=rep.bayes_subset,
            lambda_min_inv=rep.lambda_min_inv,
            positive_definite=int(rep.positive_definite),
        )
        return 0
    if kind != "thin" or not arg.isdigit():
        raise UsageError("--subset must be 'first:k' or 'thin:J'")
    if args.seed is None:
        raise UsageError("--subset thin:J is randomized and needs --seed")
    g = mc_gamma(spec, int(arg), args.trials, args.seed, args.epsilon)
    emit(
        p=args.p,
        parts=g.parts,
        trials=len(g.samples),
        S_full=g.s_full,
        gamma_min=g.min,
        gamma_median=g.median,
        fraction_below=g.fraction_below,
        positive_definite=int(spec.positive_definite),
    )
    if args.figure:
        plotting.gamma_histogram(g, args.figure)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.with_per_class(args.per_class, size=args.size, seed=args.seed)
    corpus = synth_corpus(cfg)
    out = Path(args.out)
    for sub in ("images", "blobs", "patches"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for i, (img, lab, blob) in enumerate(zip(corpus.images, corpus.labels, corpus.blob_masks)):
            name = f"img_{i:04d}_c{lab}.pgm"
            save_pgm(out / "images" / name, img)
            save_pgm(out / "blobs" / name, GrayImage(blob.astype(np.uint8) * 255))
            w.writerow([f"images/{name}", int(lab)])
    patches = synth_patches(cfg, per_class=args.patches_per_class)
    for i, patch in enumerate(patches):
        save_pgm(out / "patches" / f"patch_{i:02d}.pgm", patch)
    emit(images=len(corpus.images), classes=cfg.classes, patches=len(patches), out=str(out))
    return 0


def cmd_learning_curve(args) -> int:
    table = FeatureTable.read(args.features)
    data = table.dataset()
    sizes = [int(s) for s in args.sizes.split(",")]
    params = ForestParams(args.trees, None if args.mtry is None else mtry_from_name(args.mtry, data.p), args.seed)
    points = learning_curve(data, sizes, args.repeats, params, args.seed, args.test_fraction)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "repeat", "error"])
            for pt in points:
                w.writerow([pt.size, pt.repeat, repr(pt.error)])
    if args.figure:
        plotting.learning_curve_figure(points, args.figure)
    for size, err in median_errors(points).items():
        print(f"size={size} median_error={err:.10g}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tacoma", description="GLCM texture features, random forests and co-training")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def forest_opts(p, grid=True):
        p.add_argument("--trees", type=int, default=100, choices=TREE_GRID if grid else None)
        p.add_argument("--mtry", choices=sorted(MTRY_GRID), default=None, help="default: sqrt")

    p = sub.add_parser("mask", help="build a feature mask from a directory of patches")
    p.add_argument("--patches", required=True)
    p.add_argument("--rel", required=True, help="e.g. ne3")
    p.add_argument("--levels", type=int, default=51)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("extract", help="masked GLCM features for every manifest image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mask", required=True, help="one mask file per relationship, comma separated")
    p.add_argument("--rel", required=True, help="e.g. ne3,se1")
    p.add_argument("--levels", type=int, default=51)
    p.add_argument("--normalize", action="store_true", help="use GLCM frequencies instead of counts")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a random forest on the labeled rows")
    p.add_argument("--features", required=True)
    forest_opts(p)
    p.add_argument("--labeled", type=int, help="train on a class-covering random sample of this size")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="predict with a trained forest")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("oob", help="out-of-bag error and importance ranking")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="the table the model was trained on")
    p.add_argument("--top", type=int, default=0, help="also list the top features")
    p.set_defaults(func=cmd_oob)

    p = sub.add_parser("salient", help="flag pixels realizing the top-ranked GLCM entries")
    p.add_argument("--model", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--rel", help="default: the mask's relationship")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--out", help="flagged positions, one 'x y' per line")
    p.add_argument("--overlay", help="PGM copy of the image with flagged pixels in white")
    p.add_argument("--figure", help="PNG of image and flagged pixels")
    p.add_argument("--importance-figure", help="PNG of importances on the level grid")
    p.set_defaults(func=cmd_salient)

    for name, func in (("cotrain", cmd_cotrain), ("selftrain", cmd_selftrain)):
        p = sub.add_parser(name, help=f"semi-supervised {name.replace('train', '-training')}")
        p.add_argument("--features", required=True)
        p.add_argument("--trees", type=int, default=50)
        p.add_argument("--labeled", type=int, help="hide all but this many labels and report paired errors")
        if name == "cotrain":
            p.add_argument("--split", default="natural", help="natural or thin:J")
            p.add_argument("--m1", type=int, default=2)
            p.add_argument("--m2", type=int, default=2)
        else:
            p.add_argument("--m", type=int, default=4)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--out", help="CSV of inferred labels for the unlabeled rows")
        p.add_argument("--log", help="JSON round log")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="ratio of separation for a two-Gaussian mixture")
    p.add_argument("--cov", default="tridiag:0.6", help="identity, tridiag:r or ar1:r")
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--u", default="ones", help="ones, const:c or a file of p numbers")
    p.add_argument("--subset", default="first:50", help="first:k or thin:J")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--figure", help="PNG histogram of gamma (thin:J only)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="write a synthetic labeled image corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--patches-per-class", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learning-curve", help="test error against training set size")
    p.add_argument("--features", required=True)
    p.add_argument("--sizes", default="10,30,100,160")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--test-fraction", type=float, default=0.2)
    forest_opts(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="CSV of (size, repeat, error)")
    p.add_argument("--figure", help="PNG of the curve")
    p.set_defaults(func=cmd_learning_curve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"tacoma: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, PGMError, ValueError, OSError) as exc:
        print(f"tacoma: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
