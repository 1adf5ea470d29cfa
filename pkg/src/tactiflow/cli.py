"""Command-line surface for the full pipeline.

Subcommands: synth, process, train, eval, sweep, oracle-export.
Exit codes: 0 success, 2 usage/config, 3 I/O, 4 numeric failure.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import augment, classify, dataset as ds, flow as fl, formats, raster
from .errors import ConfigError, DataError, NumericError

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _parse_grid(text):
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except ValueError:
        raise ConfigError("expected ROWSxCOLS, got %r" % text)


def _parse_int_list(text):
    try:
        return [int(t) for t in text.split(",") if t != ""]
    except ValueError:
        raise ConfigError("expected comma-separated integers, got %r" % text)


def _load_layout(args):
    if args.layout:
        if not os.path.exists(args.layout):
            raise DataError("layout file not found: %s" % args.layout)
        return raster.TaxelLayout.load_csv(args.layout, pitch_mm=args.pitch)
    rows, cols = _parse_grid(args.default_layout)
    return raster.default_layout(rows, cols, pitch_mm=args.pitch)


def _flow_config(args):
    return fl.FlowConfig(pyramid_levels=args.flow_levels,
                         pyramid_scale=args.flow_scale,
                         window_size=args.flow_window,
                         poly_n=args.poly_n,
                         poly_sigma=args.poly_sigma,
                         iterations=args.flow_iterations)


def _raster_config(args, manifest, n_taxels):
    baseline = float(manifest.get("baseline_raw", 0.0))
    rng_raw = float(manifest.get("response_range_raw", raster.RAW_MAX))
    return raster.RasterConfig(step_mm=args.step,
                               baseline=np.full(n_taxels, baseline),
                               response_range=rng_raw)


def _add_flow_flags(p):
    p.add_argument("--flow-levels", type=int, default=3)
    p.add_argument("--flow-scale", type=float, default=0.5)
    p.add_argument("--flow-window", type=int, default=9)
    p.add_argument("--poly-n", type=int, default=5)
    p.add_argument("--poly-sigma", type=float, default=1.1)
    p.add_argument("--flow-iterations", type=int, default=3)
    p.add_argument("--v-max", type=float, default=5.0)
    p.add_argument("--step", type=float, default=1.0)


def _add_common_dataset_flags(p):
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--threads", type=int, default=1)
    _add_flow_flags(p)


def cmd_synth(args):
    layout = _load_layout(args)
    data = ds.synth_dataset(args.users, args.reps, layout, master_seed=args.seed)
    ds.save_dataset(data, args.out)
    counts = data.class_counts()
    print("wrote %d samples to %s" % (len(data), args.out))
    for name in counts:
        print("  %-13s %d" % (name, counts[name]))
    return 0


def _cache_key(manifest_path, mode, args):
    with open(manifest_path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    cfg = {"mode": mode, "flow": _flow_config(args).to_dict(),
           "step": args.step, "v_max": args.v_max}
    blob = digest + json.dumps(cfg, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cache_dir(dataset_dir, key):
    return os.path.join(dataset_dir, "processed", key)


def _process_one(task):
    """Worker: raw matrix -> cached per-sample array on disk."""
    (raw, layout, rcfg, fcfg, acfg, mode, path) = task
    if mode == "augmented":
        arr = augment.process_sample_frames(raw, layout, rcfg, fcfg, acfg)
    else:
        imgs = [raster.rasterize(layout, raster.normalize_frame(row, rcfg), rcfg)
                for row in np.asarray(raw, dtype=np.float64)]
        arr = np.stack([im.pixels for im in imgs]).astype(np.float32)
    np.save(path, arr)
    return path


def _run_processing(data, mode, args, cache):
    os.makedirs(cache, exist_ok=True)
    rcfg = _raster_config(args, data.manifest, len(data.layout))
    fcfg = _flow_config(args)
    acfg = augment.AugmentConfig(v_max=args.v_max)
    tasks = []
    paths = []
    for i, sample in enumerate(data.samples):
        path = os.path.join(cache, "sample_%05d.npy" % i)
        paths.append(path)
        tasks.append((sample.frame_matrix(), data.layout, rcfg, fcfg, acfg,
                      mode, path))
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            list(pool.map(_process_one, tasks, chunksize=4))
    else:
        for t in tasks:
            _process_one(t)
    meta = {"mode": mode, "flow": fcfg.to_dict(), "step": args.step,
            "v_max": args.v_max, "n_samples": len(paths),
            "files": [os.path.basename(p) for p in paths]}
    with open(os.path.join(cache, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
        f.write("\n")
    return paths


def _ensure_processed(data, mode, args):
    """Reuse the processed cache when the key matches, else build it."""
    manifest_path = os.path.join(args.dataset, "manifest.json")
    key = _cache_key(manifest_path, mode, args)
    cache = _cache_dir(args.dataset, key)
    meta = os.path.join(cache, "meta.json")
    if os.path.exists(meta):
        with open(meta, "r", encoding="utf-8") as f:
            files = json.load(f)["files"]
        return [os.path.join(cache, name) for name in files]
    return _run_processing(data, mode, args, cache)


def _load_dataset_checked(args):
    if not os.path.isdir(args.dataset):
        raise DataError("dataset directory not found: %s" % args.dataset)
    data = ds.load_dataset(args.dataset)
    if not data.samples:
        raise ConfigError("dataset is empty")
    return data


def cmd_process(args):
    data = _load_dataset_checked(args)
    paths = _ensure_processed(data, args.mode, args)
    print("processed %d samples (%s mode) -> %s"
          % (len(paths), args.mode, os.path.dirname(paths[0])))
    if args.render_every:
        render_dir = os.path.join(os.path.dirname(paths[0]), "renders")
        os.makedirs(render_dir, exist_ok=True)
        count = 0
        for i, path in enumerate(paths):
            arr = np.load(path)
            for k in range(0, arr.shape[0], args.render_every):
                frame = arr[k]
                if args.mode == "augmented":
                    name = "sample_%05d_frame_%03d.ppm" % (i, k)
                    data_bytes = formats.encode_ppm(frame[:, :, 0], frame[:, :, 1],
                                                    frame[:, :, 2])
                else:
                    name = "sample_%05d_frame_%03d.pgm" % (i, k)
                    data_bytes = formats.encode_pgm(frame)
                with open(os.path.join(render_dir, name), "wb") as f:
                    f.write(data_bytes)
                count += 1
        print("rendered %d frames -> %s" % (count, render_dir))
    return 0


def _feature_caches(paths, pool_rows, pool_cols):
    caches = []
    for path in paths:
        if not os.path.exists(path):
            raise DataError("missing processed sample: %s" % path)
        arr = np.load(path)
        caches.append(classify.sequence_cell_means(arr, pool_rows, pool_cols))
    return caches


def _experiment_inputs(args):
    data = _load_dataset_checked(args)
    paths = _ensure_processed(data, "augmented", args)
    rows, cols = _parse_grid(args.pool)
    caches = _feature_caches(paths, rows, cols)
    fc = classify.FeatureConfig(pool_rows=rows, pool_cols=cols)
    tc = classify.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                              dropout_p=args.dropout, batch_size=args.batch_size)
    return data, caches, fc, tc


def cmd_train(args):
    data, caches, fc, tc = _experiment_inputs(args)
    split = ds.split_dataset(data, args.test_per_class, args.seed)
    labels = [int(s.label) for s in data.samples]
    model, conf, acc = classify.experiment_single(
        caches, labels, split, args.variant, args.seed, args.L, fc, tc)
    model.save_json(args.out)
    print("trained %s model (L=%d, seed=%d): held-out accuracy %.4f"
          % (args.variant, args.L, args.seed, acc))
    print("model -> %s" % args.out)
    return 0


def cmd_eval(args):
    data, caches, fc, tc = _experiment_inputs(args)
    seeds = _parse_int_list(args.seeds)
    variants = args.variants.split(",")
    reports = classify.run_experiment(data, caches, L=args.L, variants=variants,
                                      seeds=seeds, test_per_class=args.test_per_class,
                                      feature_config=fc, train_config=tc)
    doc = {v: reports[v].to_dict() for v in variants}
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")
    for v in variants:
        rep = reports[v]
        print("%-10s L=%d mean accuracy %.4f +/- %.4f (seeds %s)"
              % (v, args.L, rep.mean_accuracy, rep.accuracy_std,
                 ",".join(str(s) for s in rep.seeds)))
    print("report -> %s" % args.out)
    return 0


def cmd_sweep(args):
    data, caches, fc, tc = _experiment_inputs(args)
    seeds = _parse_int_list(args.seeds)
    variants = args.variants.split(",")
    L_values = _parse_int_list(args.L_values)
    rows, reports = classify.sweep_L(data, caches, L_values=L_values,
                                     variants=variants, seeds=seeds,
                                     test_per_class=args.test_per_class,
                                     feature_config=fc, train_config=tc)
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["L", "variant", "seed", "accuracy"])
        for row in rows:
            writer.writerow([row["L"], row["variant"], row["seed"],
                             repr(row["accuracy"])])
    summary = {"%d/%s" % (L, v): reports[(L, v)].to_dict()
               for (L, v) in reports}
    sum_path = os.path.join(args.out_dir, "sweep_summary.json")
    with open(sum_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=1)
        f.write("\n")
    for (L, v) in sorted(reports):
        rep = reports[(L, v)]
        print("L=%d %-10s %.4f +/- %.4f" % (L, v, rep.mean_accuracy,
                                            rep.accuracy_std))
    print("sweep -> %s, %s" % (csv_path, sum_path))
    return 0


# Pair selection order mixes contact regimes: static, translating, rotating.
_EXPORT_CLASS_CYCLE = (ds.GestureClass.GRASP, ds.GestureClass.PULL,
                       ds.GestureClass.TWIST, ds.GestureClass.PUSH,
                       ds.GestureClass.TWO_HAND_GRASP)


def cmd_oracle_export(args):
    data = _load_dataset_checked(args)
    rcfg = _raster_config(args, data.manifest, len(data.layout))
    fcfg = _flow_config(args)
    by_class = {c: [i for i, s in enumerate(data.samples) if s.label == c]
                for c in _EXPORT_CLASS_CYCLE}
    os.makedirs(args.out, exist_ok=True)
    entries = []
    for n in range(args.pairs):
        cls = _EXPORT_CLASS_CYCLE[n % len(_EXPORT_CLASS_CYCLE)]
        pool = by_class[cls]
        if not pool:
            raise ConfigError("dataset has no %s samples" % ds.CLASS_NAMES[cls])
        sample = data.samples[pool[(n // len(_EXPORT_CLASS_CYCLE)) % len(pool)]]
        k = min(4, len(sample.frames) - 2)
        imgs = []
        for idx in (k, k + 1):
            norm = raster.normalize_frame(sample.frames[idx], rcfg)
            imgs.append(raster.rasterize(data.layout, norm, rcfg))
        # Flow is computed on the 8-bit round-trip of the pair so the
        # reference implementation sees byte-identical inputs.
        quant = [formats.decode_pgm(im.to_pgm()).astype(np.float64) / 255.0
                 for im in imgs]
        field = fl.farneback_flow(quant[0], quant[1], fcfg)
        names = {"prev": "pair_%02d_prev.pgm" % n,
                 "curr": "pair_%02d_curr.pgm" % n,
                 "flow": "pair_%02d.tflo" % n}
        with open(os.path.join(args.out, names["prev"]), "wb") as f:
            f.write(imgs[0].to_pgm())
        with open(os.path.join(args.out, names["curr"]), "wb") as f:
            f.write(imgs[1].to_pgm())
        with open(os.path.join(args.out, names["flow"]), "wb") as f:
            f.write(field.to_tflo())
        entries.append({"prev": names["prev"], "curr": names["curr"],
                        "flow": names["flow"], "label": ds.CLASS_NAMES[cls],
                        "frame_index": k})
    index = {"pairs": entries, "flow_params": fcfg.to_dict(),
             "quantization": "pgm-8bit", "pressure_threshold": 0.05}
    with open(os.path.join(args.out, "index.json"), "w", encoding="utf-8") as f:
        json.dump(index, f, sort_keys=True, indent=1)
        f.write("\n")
    print("exported %d pairs -> %s" % (len(entries), args.out))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tactiflow",
                                description="tactile image + optical flow pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic gesture dataset")
    sp.add_argument("--users", type=int, default=12)
    sp.add_argument("--reps", type=int, default=10)
    sp.add_argument("--layout", default=None, help="layout CSV path")
    sp.add_argument("--default-layout", default="16x24", help="ROWSxCOLS lattice")
    sp.add_argument("--pitch", type=float, default=7.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    pp = sub.add_parser("process", help="rasterize + flow-augment a dataset")
    _add_common_dataset_flags(pp)
    pp.add_argument("--mode", choices=["raw", "augmented"], default="augmented")
    pp.add_argument("--render-every", type=int, default=0, metavar="K")
    pp.set_defaults(func=cmd_process)

    def add_experiment_flags(q, single_seed):
        _add_common_dataset_flags(q)
        q.add_argument("--test-per-class", type=int, default=30)
        q.add_argument("--pool", default="8x8")
        q.add_argument("--lr", type=float, default=0.001)
        q.add_argument("--epochs", type=int, default=100)
        q.add_argument("--dropout", type=float, default=0.3)
        q.add_argument("--batch-size", type=int, default=32)
        if single_seed:
            q.add_argument("--seed", type=int, default=0)
        else:
            q.add_argument("--seeds", default="0,1,2")
            q.add_argument("--variants", default="raw,augmented")

    tp = sub.add_parser("train", help="train one classifier variant")
    add_experiment_flags(tp, single_seed=True)
    tp.add_argument("--L", type=int, default=5)
    tp.add_argument("--variant", choices=["raw", "augmented"], default="augmented")
    tp.add_argument("--out", required=True)
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("eval", help="paired raw-vs-augmented evaluation")
    add_experiment_flags(ep, single_seed=False)
    ep.add_argument("--L", type=int, default=5)
    ep.add_argument("--out", required=True)
    ep.set_defaults(func=cmd_eval)

    wp = sub.add_parser("sweep", help="accuracy sweep over window length L")
    add_experiment_flags(wp, single_seed=False)
    wp.add_argument("--L-values", default="1,2,3,4,5,6")
    wp.add_argument("--out-dir", required=True)
    wp.set_defaults(func=cmd_sweep)

    op = sub.add_parser("oracle-export", help="export PGM pairs + TFLO flows")
    op.add_argument("--dataset", required=True)
    op.add_argument("--pairs", type=int, default=10)
    op.add_argument("--out", required=True)
    op.add_argument("--threads", type=int, default=1)
    _add_flow_flags(op)
    op.set_defaults(func=cmd_oracle_export)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print("I/O error: %s" % e, file=sys.stderr)
        return EXIT_IO
    except NumericError as e:
        print("numeric failure: %s" % e, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
