"""Random detection/ground-truth instances shared by the metric tests."""
from scanstack.core import ObjectClass
from scanstack.labels import RasterBox
from scanstack.metrics import Detection


def px(cls, x1, y1, x2, y2):
    return RasterBox.from_pixels(cls, x1, y1, x2, y2)


def as_tuple(box, conf=None):
    t = (int(box.cls), *box.to_pixels())
    return t if conf is None else (*t, conf)


def random_instance(rng, n_frames=3, max_boxes=10):
    gts, dets = [], []
    for _ in range(n_frames):
        g = []
        for _ in range(rng.integers(0, max_boxes + 1)):
            x1, y1 = rng.uniform(0, 340), rng.uniform(0, 56)
            g.append(px(ObjectClass(int(rng.integers(4))), x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 8)))
        d = []
        for _ in range(rng.integers(0, max_boxes + 1)):
            if g and rng.random() < 0.7:
                src = g[rng.integers(len(g))]
                x1, y1, x2, y2 = src.to_pixels()
                j = rng.normal(0, 1.0, 4)
                cls = src.cls if rng.random() < 0.8 else ObjectClass(int(rng.integers(4)))
                b = px(cls, x1 + j[0], y1 + j[1] * 0.3, max(x2 + j[2], x1 + j[0] + 0.5), max(y2 + j[3] * 0.3, y1 + j[1] * 0.3 + 0.5))
            else:
                x1, y1 = rng.uniform(0, 340), rng.uniform(0, 56)
                b = px(ObjectClass(int(rng.integers(4))), x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 8))
            d.append(Detection(b, float(rng.uniform(0.01, 1.0))))
        gts.append(g)
        dets.append(d)
    return dets, gts


def to_ref(dets, gts):
    return [[as_tuple(d.box, d.confidence) for d in f] for f in dets], [[as_tuple(g) for g in f] for f in gts]
