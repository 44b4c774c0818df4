#!/usr/bin/env python3
"""Regenerate the model files and test fixtures checked into crates/core.

Needs: numpy, scipy, Pillow, scikit-image, scikit-learn, matplotlib, torch,
plus `pip install --no-deps pyiqa brisque libsvm-official` and the BasicSR
source distribution (basicsr-1.4.2.tar.gz), whose metrics/niqe_pris_params.npz
holds the canonical MATLAB NIQE pristine model. Pass its path in NIQE_PARAMS.

Outputs
  crates/core/data/niqe_pristine.model      canonical NIQE pristine MVG (BasicSR copy of the LIVE release)
  crates/core/data/brisque_live.svm         LIVE BRISQUE SVR, libsvm text format
  crates/core/data/brisque_live.range       per-feature scaling ranges
  crates/core/tests/data/nss/               50 natural-image crops (JPEG q95, 4:4:4)
  crates/core/tests/data/canonical/         3 grayscale PNGs + reference scores
  crates/core/tests/data/toy/               30-image annotated pipeline corpus +
                                            expected funnel computed by an
                                            independent numpy oracle
"""
import io
import json
import math
import os
import pickle
import random
import shutil
import sys

import numpy as np
from PIL import Image, ImageFilter
from scipy import ndimage

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CORE = os.path.join(ROOT, "crates", "core")
DATA = os.path.join(CORE, "data")
TESTDATA = os.path.join(CORE, "tests", "data")



# ---------------------------------------------------------------- models

def load_niqe_params():
    d = np.load(os.environ.get("NIQE_PARAMS", "niqe_pris_params.npz"))
    return d["mu_pris_param"].reshape(-1), d["cov_pris_param"]


def write_niqe_model():
    mu, cov = load_niqe_params()
    assert mu.shape == (36,) and cov.shape == (36, 36)
    lines = [
        "# NIQE pristine multivariate Gaussian (canonical LIVE release parameters)",
        "hqacf-niqe-model 1",
        "dim 36",
        "patch_size 96",
        "sharpness_fraction 0.75",
        "mean",
        " ".join(repr(float(v)) for v in mu),
        "covariance",
    ]
    lines += [" ".join(repr(float(v)) for v in row) for row in cov]
    with open(os.path.join(DATA, "niqe_pristine.model"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return mu, cov


def write_brisque_model():
    import brisque

    models = os.path.join(os.path.dirname(brisque.__file__), "models")
    shutil.copy(os.path.join(models, "svm.txt"), os.path.join(DATA, "brisque_live.svm"))
    with open(os.path.join(models, "normalize.pickle"), "rb") as f:
        rng = pickle.load(f)
    with open(os.path.join(DATA, "brisque_live.range"), "w") as f:
        f.write("# feature_index min max (scaled to [-1, 1])\n")
        for i, (lo, hi) in enumerate(zip(rng["min_"], rng["max_"])):
            f.write(f"{i + 1} {lo!r} {hi!r}\n")


# ---------------------------------------------------------------- sources

def source_photos():
    import matplotlib
    import skimage.data as d
    from sklearn.datasets import load_sample_images

    def rgb(a):
        a = np.asarray(a)
        if a.ndim == 2:
            a = np.stack([a] * 3, axis=-1)
        return Image.fromarray(a[..., :3].astype(np.uint8))

    imgs = {
        "astronaut": rgb(d.astronaut()),
        "camera": rgb(d.camera()),
        "coffee": rgb(d.coffee()),
        "rocket": rgb(d.rocket()),
        "chelsea": rgb(d.chelsea()),
        "brick": rgb(d.brick()),
        "grass": rgb(d.grass()),
        "gravel": rgb(d.gravel()),
        "ihc": rgb(d.immunohistochemistry()),
        "clock": rgb(d.clock()),
        "coins": rgb(d.coins()),
        "moon": rgb(d.moon()),
        "cell": rgb(d.cell()),
    }
    china, flower = load_sample_images().images
    imgs["china"] = rgb(china)
    imgs["flower"] = rgb(flower)
    imgs["hopper"] = Image.open(
        os.path.join(matplotlib.get_data_path(), "sample_data", "grace_hopper.jpg")
    ).convert("RGB")
    return imgs


def save_jpeg(img, path, quality):
    img.save(path, "JPEG", quality=quality, subsampling=0)


def build_nss_corpus(photos):
    out = os.path.join(TESTDATA, "nss")
    os.makedirs(out, exist_ok=True)
    rng = random.Random(20250101)
    names = sorted(photos)
    k = 0
    while k < 50:
        name = names[k % len(names)]
        img = photos[name]
        w, h = img.size
        side = min(384, w, h)
        side -= side % 32
        x = rng.randint(0, w - side)
        y = rng.randint(0, h - side)
        tile = img.crop((x, y, x + side, y + side))
        if rng.random() < 0.5:
            tile = tile.transpose(Image.FLIP_LEFT_RIGHT)
        save_jpeg(tile, os.path.join(out, f"nss_{k:02d}_{name}.jpg"), 95)
        k += 1


# ---------------------------------------------------------------- references

def brisque_reference_features(gray):
    import torch
    from pyiqa.archs.brisque_arch import natural_scene_statistics
    from pyiqa.matlab_utils import imresize

    x = torch.tensor(gray.astype(np.float64))[None, None]
    feats = []
    for _ in range(2):
        feats.append(natural_scene_statistics(x, 7, 7 / 6))
        x = imresize(x, scale=0.5, antialiasing=True)
    return torch.cat(feats, dim=-1).reshape(-1).numpy()


def svr_score(feats):
    """Plain numpy evaluation of the bundled libsvm model and range file."""
    ranges = {}
    with open(os.path.join(DATA, "brisque_live.range")) as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            i, lo, hi = line.split()
            ranges[int(i)] = (float(lo), float(hi))
    lo = np.array([ranges[i][0] for i in range(1, 37)])
    hi = np.array([ranges[i][1] for i in range(1, 37)])
    x = np.clip(-1 + 2 * (feats - lo) / (hi - lo), -1, 1)
    header, svs, coefs = {}, [], []
    with open(os.path.join(DATA, "brisque_live.svm")) as f:
        in_sv = False
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if not in_sv:
                if parts[0] == "SV":
                    in_sv = True
                else:
                    header[parts[0]] = parts[1:]
                continue
            coefs.append(float(parts[0]))
            v = np.zeros(36)
            for p in parts[1:]:
                k, val = p.split(":")
                v[int(k) - 1] = float(val)
            svs.append(v)
    gamma = float(header["gamma"][0])
    rho = float(header["rho"][0])
    k = np.exp(-gamma * ((np.array(svs) - x) ** 2).sum(axis=1))
    return float(k @ np.array(coefs) - rho)


def build_canonical(photos):
    import torch
    from pyiqa.archs.niqe_arch import niqe
    from brisque import BRISQUE

    out = os.path.join(TESTDATA, "canonical")
    os.makedirs(out, exist_ok=True)
    mu_np, cov_np = load_niqe_params()
    mu = torch.tensor(mu_np.reshape(1, -1), dtype=torch.float64)
    cov = torch.tensor(cov_np[None], dtype=torch.float64)

    grays = {
        "camera": np.asarray(photos["camera"])[..., 0],
        "moon": np.asarray(photos["moon"])[..., 0],
        "astronaut_gray": np.asarray(photos["astronaut"].convert("L")),
    }
    refs = {"niqe": {}, "brisque": {}}
    for name, g in grays.items():
        Image.fromarray(g.astype(np.uint8)).save(os.path.join(out, f"{name}.png"))
        t = torch.tensor(g.astype(np.float64))[None, None]
        refs["niqe"][name] = float(niqe(t, mu, cov))
    feats = brisque_reference_features(grays["camera"])
    refs["brisque"]["camera"] = svr_score(feats)
    refs["brisque_features"] = {"camera": feats.tolist()}
    refs["brisque_package"] = {
        "camera": float(BRISQUE(url=False).score(np.stack([grays["camera"]] * 3, -1)))
    }
    refs["niqe_implementation"] = "pyiqa 0.1.16 niqe_arch.niqe with BasicSR niqe_pris_params.npz"
    refs["brisque_implementation"] = (
        "pyiqa 0.1.16 brisque_arch.natural_scene_statistics + imresize features, "
        "scored with the bundled svm/range files"
    )
    refs["brisque_package_implementation"] = "brisque 0.2.0 end to end (own feature variant)"
    with open(os.path.join(out, "reference.json"), "w") as f:
        json.dump(refs, f, indent=2)
    print("canonical references:", refs)


# ---------------------------------------------------------------- toy corpus

W, H = 640, 480
MIN_SIDE = 256
IOU = 0.45
BLUR_THRESHOLD = 100.0


def luma(img):
    a = np.asarray(img.convert("RGB"), dtype=np.float64)
    return a[..., 0] * 0.299 + a[..., 1] * 0.587 + a[..., 2] * 0.114


def lap_var(gray):
    k = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)
    return float(ndimage.convolve(gray, k, mode="nearest").var())


def clamp_box(x, y, w, h, iw, ih):
    x0, y0 = max(0.0, x), max(0.0, y)
    x1, y1 = min(float(iw), x + w), min(float(ih), y + h)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def squarify(b, iw, ih):
    x, y, w, h = b
    side = min(max(w, h), iw, ih)
    # an axis longer than the clamped side is aligned to the box's leading edge
    ox = x if w > side else x + w / 2 - side / 2
    oy = y if h > side else y + h / 2 - side / 2
    sx = min(max(ox, 0.0), iw - side)
    sy = min(max(oy, 0.0), ih - side)
    dist = math.hypot(sx + side / 2 - iw / 2, sy + side / 2 - ih / 2)
    return (sx, sy, side, dist)


def iou(a, b):
    ax, ay, aside = a[:3]
    bx, by, bside = b[:3]
    iw = max(0.0, min(ax + aside, bx + bside) - max(ax, bx))
    ih = max(0.0, min(ay + aside, by + bside) - max(ay, by))
    inter = iw * ih
    union = aside * aside + bside * bside - inter
    return inter / union if union > 0 else 0.0


def nms(crops):
    order = sorted(crops, key=lambda c: (c[3], c[0], c[1]))
    kept = []
    for c in order:
        if all(iou(c, k) <= IOU for k in kept):
            kept.append(c)
    return kept


def scene(photos, name, rng, blur):
    img = photos[name]
    w, h = img.size
    # largest 4:3 window at a random offset, resized to 640x480
    cw = min(w, h * 4 // 3)
    ch = cw * 3 // 4
    x = rng.randint(0, w - cw)
    y = rng.randint(0, h - ch)
    img = img.crop((x, y, x + cw, y + ch)).resize((W, H), Image.LANCZOS)
    if rng.random() < 0.5:
        img = img.transpose(Image.FLIP_LEFT_RIGHT)
    if blur:
        img = img.filter(ImageFilter.GaussianBlur(4))
    return img


def jpeg_roundtrip(img, quality):
    buf = io.BytesIO()
    save_jpeg(img, buf, quality)
    buf.seek(0)
    return Image.open(buf).convert("RGB")


def random_boxes(rng):
    """Person boxes in [x, y, w, h] pixel form; mixes large, small, duplicated
    and border-crossing boxes."""
    boxes = []
    for _ in range(rng.randint(1, 3)):
        bh = rng.uniform(200, 470)
        bw = rng.uniform(80, 300)
        bx = rng.uniform(-20, W - bw + 20)
        by = rng.uniform(-10, H - bh + 10)
        boxes.append([bx, by, bw, bh])
        if rng.random() < 0.35:
            j = rng.uniform(-15, 15)
            boxes.append([bx + j, by - j, bw * 0.95, bh * 1.02])
    for _ in range(rng.randint(0, 2)):
        s = rng.uniform(30, 140)
        boxes.append([rng.uniform(0, W - s), rng.uniform(0, H - s), s * 0.6, s])
    return [[round(v, 1) for v in b] for b in boxes]


def build_toy(photos):
    out = os.path.join(TESTDATA, "toy")
    if os.path.isdir(out):
        shutil.rmtree(out)
    for sub in ("coco", "oid", "crowdhuman", "lsdir"):
        os.makedirs(os.path.join(out, "images", sub))
    rng = random.Random(7)
    # chelsea upsamples to a Laplacian variance sitting right on the default gate
    names = sorted(n for n in photos if n != "chelsea")
    blurred = {3, 8, 14, 21, 27}
    no_person = {5, 17}  # COCO dog-only image, ODGT mask-only image
    scenes = []
    for i in range(30):
        # keep sharp scenes well clear of the gate so codec rounding cannot flip them
        for _ in range(50):
            img = scene(photos, names[(i * 7) % len(names)], rng, i in blurred)
            var = lap_var(luma(jpeg_roundtrip(img, 92)))
            if i in blurred or not (85.0 <= var <= 118.0):
                break
        scenes.append(img)

    truth = []  # per image: (kind, blurred?, [boxes])

    # COCO: images 0..11 (category 1 person, 18 dog)
    coco = {"images": [], "annotations": [], "categories": [
        {"id": 1, "name": "person"}, {"id": 18, "name": "dog"}]}
    ann_id = 1
    for i in range(12):
        fname = f"{i + 1:012d}.jpg"
        save_jpeg(scenes[i], os.path.join(out, "images", "coco", fname), 92)
        coco["images"].append({"id": i + 1, "file_name": fname, "width": W, "height": H})
        boxes = [] if i in no_person else random_boxes(rng)
        for b in boxes:
            coco["annotations"].append({"id": ann_id, "image_id": i + 1, "category_id": 1,
                                        "bbox": b, "area": b[2] * b[3], "iscrowd": 0})
            ann_id += 1
        coco["annotations"].append({"id": ann_id, "image_id": i + 1, "category_id": 18,
                                    "bbox": [5, 5, 60, 40], "area": 2400, "iscrowd": 0})
        ann_id += 1
        truth.append((f"coco_{i + 1}", scenes[i], boxes))
    # one annotation pointing at an unknown image: warning, skipped
    coco["annotations"].append({"id": ann_id, "image_id": 999, "category_id": 1,
                                "bbox": [0, 0, 10, 10], "area": 100, "iscrowd": 0})
    with open(os.path.join(out, "coco.json"), "w") as f:
        json.dump(coco, f)

    # OID: images 12..17
    rows = ["ImageID,Source,LabelName,Confidence,XMin,XMax,YMin,YMax,IsOccluded,IsTruncated,IsGroupOf,IsDepiction,IsInside"]
    for i in range(12, 18):
        iid = f"{0x1000 + i:016x}"
        save_jpeg(scenes[i], os.path.join(out, "images", "oid", iid + ".jpg"), 92)
        boxes = random_boxes(rng)
        kept = []
        for j, b in enumerate(boxes):
            x0 = round(min(max(b[0] / W, 0.0), 1.0), 6)
            x1 = round(min(max((b[0] + b[2]) / W, 0.0), 1.0), 6)
            y0 = round(min(max(b[1] / H, 0.0), 1.0), 6)
            y1 = round(min(max((b[1] + b[3]) / H, 0.0), 1.0), 6)
            label = "/m/01g317" if j % 2 == 0 else "/m/02p0tk3"
            rows.append(f"{iid},xclick,{label},1,{x0:.6f},{x1:.6f},{y0:.6f},{y1:.6f},0,0,0,0,0")
            kept.append([x0 * W, y0 * H, (x1 - x0) * W, (y1 - y0) * H])
        rows.append(f"{iid},xclick,/m/0bt9lr,1,0.1,0.2,0.1,0.2,0,0,0,0,0")
        truth.append((f"oid_{iid}", scenes[i], kept))
    with open(os.path.join(out, "oid.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")

    # CrowdHuman ODGT: images 18..23
    lines = []
    for i in range(18, 24):
        cid = f"284193,{0xfa00 + i:x}"
        save_jpeg(scenes[i], os.path.join(out, "images", "crowdhuman", cid + ".jpg"), 92)
        boxes = [] if i in no_person else random_boxes(rng)
        gt = [{"tag": "person", "fbox": [round(v) for v in b], "extra": {"ignore": 0}} for b in boxes]
        gt.append({"tag": "mask", "fbox": [10, 10, 300, 300], "extra": {"ignore": 1}})
        gt.append({"tag": "person", "fbox": [0, 0, 400, 400], "extra": {"ignore": 1}})
        lines.append(json.dumps({"ID": cid, "gtboxes": gt}))
        truth.append((f"crowdhuman_{cid}", scenes[i], [[float(round(v)) for v in b] for b in boxes]))
    lines.insert(2, "{not json")
    with open(os.path.join(out, "crowdhuman.odgt"), "w") as f:
        f.write("\n".join(lines) + "\n")

    # Detector import: images 24..29
    lines = []
    for i in range(24, 30):
        fname = f"lsdir_{i:04d}.jpg"
        save_jpeg(scenes[i], os.path.join(out, "images", "lsdir", fname), 92)
        boxes = random_boxes(rng)
        dets = [{"x1": b[0], "y1": b[1], "x2": round(b[0] + b[2], 1), "y2": round(b[1] + b[3], 1),
                 "conf": 0.9, "cls": 0} for b in boxes]
        dets.append({"x1": 20, "y1": 20, "x2": 420, "y2": 460, "conf": 0.2, "cls": 0})
        lines.append(json.dumps({"image": fname, "width": W, "height": H, "boxes": dets}))
        truth.append((f"det_{fname.rsplit('.', 1)[0]}", scenes[i],
                      [[b[0], b[1], round(b[0] + b[2], 1) - b[0], round(b[1] + b[3], 1) - b[1]] for b in boxes]))
    with open(os.path.join(out, "lsdir_detections.jsonl"), "w") as f:
        f.write("\n".join(lines) + "\n")

    # ---- independent oracle for the funnel
    f = dict(collected=30, person_labeled=0, passed_blur_gate=0, boxes_total=0,
             boxes_after_size_gate=0, crops_after_nms=0)
    per_image = {}
    for image_id, img, boxes in truth:
        clamped = [c for c in (clamp_box(*b, W, H) for b in boxes) if c is not None]
        if not clamped:
            continue
        f["person_labeled"] += 1
        # variance of the decoded JPEG, as the pipeline will see it
        sub = image_id.split("_")[0]
        var = lap_var(luma(img_from_disk(out, image_id)))
        per_image[image_id] = {"laplacian_variance": var, "boxes": len(clamped)}
        if var < BLUR_THRESHOLD:
            continue
        f["passed_blur_gate"] += 1
        f["boxes_total"] += len(clamped)
        crops = [squarify(c, W, H) for c in clamped]
        crops = [c for c in crops if c[2] >= MIN_SIDE]
        f["boxes_after_size_gate"] += len(crops)
        kept = nms(crops)
        f["crops_after_nms"] += len(kept)
        per_image[image_id]["kept"] = len(kept)
    f["scored"] = f["crops_after_nms"]
    f["top_fraction"] = f["scored"] // 3
    f["selected"] = f["top_fraction"]
    with open(os.path.join(out, "expected_funnel.json"), "w") as fh:
        json.dump({"funnel": f, "images": per_image}, fh, indent=2, sort_keys=True)
    print("toy funnel:", f)
    for k, v in sorted(per_image.items()):
        print(f"  {k:32s} var={v['laplacian_variance']:10.2f} boxes={v['boxes']} kept={v.get('kept')}")


def img_from_disk(out, image_id):
    kind, rest = image_id.split("_", 1)
    if kind == "coco":
        p = os.path.join(out, "images", "coco", f"{int(rest):012d}.jpg")
    elif kind == "oid":
        p = os.path.join(out, "images", "oid", rest + ".jpg")
    elif kind == "crowdhuman":
        p = os.path.join(out, "images", "crowdhuman", rest + ".jpg")
    else:
        p = os.path.join(out, "images", "lsdir", rest + ".jpg")
    return Image.open(p)


def main():
    os.makedirs(DATA, exist_ok=True)
    os.makedirs(TESTDATA, exist_ok=True)
    write_niqe_model()
    write_brisque_model()
    photos = source_photos()
    build_nss_corpus(photos)
    build_canonical(photos)
    build_toy(photos)


if __name__ == "__main__":
    sys.exit(main())
