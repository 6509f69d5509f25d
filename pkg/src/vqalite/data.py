"""Synthetic balanced-pair VQA corpus: scenes, rendering, questions, I/O.

Scenes are lists of colored shapes on a white 64x64 canvas. Questions
come in three categories, always as complementary pairs sharing their
text but differing in answer:

  count   "how many red squares"        answers 0..5
  number  "are there more than 2 circles"  yes / no
  other   "what color is the triangle"  red / green / blue

Datasets are stored as scene specs, not pixels; rendering is a pure
deterministic function of the spec, so files stay small and bitwise
reproducible.
"""

from dataclasses import dataclass

import numpy as np

SHAPES = ("square", "circle", "triangle")
COLORS = ("red", "green", "blue")
COLOR_RGB = {"red": (1.0, 0.0, 0.0), "green": (0.0, 1.0, 0.0), "blue": (0.0, 0.0, 1.0)}
CATEGORIES = ("count", "number", "other")
ANSWERS = tuple(str(k) for k in range(11)) + ("yes", "no", "red", "green", "blue")
ANSWER_INDEX = {a: i for i, a in enumerate(ANSWERS)}

IMAGE_SIZE = 64
MIN_OBJECT_SIZE = 0.08
MAX_OBJECT_SIZE = 0.2
MAX_OBJECTS = 8
MAX_QUESTION_COUNT = 5
PLACEMENT_GAP = 0.02
MAX_PLACEMENT_TRIES = 1000


class GenerationError(RuntimeError):
    """Scene constraints could not be satisfied within the retry budget."""


class DatasetFormatError(ValueError):
    """A dataset file line failed to parse; message names the line."""


@dataclass
class SceneObject:
    shape: str
    color: str
    cx: float
    cy: float
    size: float

    @property
    def box(self):
        h = self.size / 2.0
        return (self.cx - h, self.cy - h, self.cx + h, self.cy + h)


@dataclass
class SceneSpec:
    objects: list
    seed: int

    def boxes(self):
        return np.asarray([o.box for o in self.objects], dtype=np.float64).reshape(-1, 4)


@dataclass
class Sample:
    id: int
    pair_id: int
    member: str
    category: str
    question_tokens: list
    answer: str
    scene: SceneSpec

    @property
    def answer_index(self):
        return ANSWER_INDEX[self.answer]


# ---- scene construction ----


def _boxes_separated(a, b, gap=PLACEMENT_GAP):
    ha, hb = a.size / 2.0, b.size / 2.0
    return (
        abs(a.cx - b.cx) >= ha + hb + gap
        or abs(a.cy - b.cy) >= ha + hb + gap
    )


def place_objects(rng, kinds, seed=0):
    """Place (shape, color) pairs with boxes inside the image and disjoint.

    Sequential rejection sampling; each object gets MAX_PLACEMENT_TRIES
    attempts against the ones already placed.
    """
    if len(kinds) > MAX_OBJECTS:
        raise GenerationError(f"cannot place {len(kinds)} objects (limit {MAX_OBJECTS})")
    placed = []
    for shape, color in kinds:
        for attempt in range(MAX_PLACEMENT_TRIES):
            size = float(rng.uniform(MIN_OBJECT_SIZE, MAX_OBJECT_SIZE))
            half = size / 2.0
            cx = float(rng.uniform(half, 1.0 - half))
            cy = float(rng.uniform(half, 1.0 - half))
            candidate = SceneObject(shape, color, cx, cy, size)
            if all(_boxes_separated(candidate, other) for other in placed):
                placed.append(candidate)
                break
        else:
            raise GenerationError(
                f"could not place object {len(placed) + 1} of {len(kinds)} "
                f"after {MAX_PLACEMENT_TRIES} attempts"
            )
    return SceneSpec(objects=placed, seed=seed)


def gen_scene(rng, object_count, seed=0):
    """Scene of ``object_count`` random objects (uniform shape and color)."""
    if not 0 <= object_count <= MAX_OBJECTS:
        raise ValueError(f"object_count must be in [0, {MAX_OBJECTS}], got {object_count}")
    kinds = [
        (SHAPES[int(rng.integers(len(SHAPES)))], COLORS[int(rng.integers(len(COLORS)))])
        for _ in range(object_count)
    ]
    return place_objects(rng, kinds, seed=seed)


# ---- rendering ----


def render_scene(spec):
    """Rasterize to float32 (3, 64, 64) in [0,1]; white background.

    Pixel-center membership tests, no anti-aliasing. Triangles point up
    and are inscribed in the object's bounding box.
    """
    img = np.ones((3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    coords = (np.arange(IMAGE_SIZE) + 0.5) / IMAGE_SIZE
    px = coords[None, :]
    py = coords[:, None]
    for obj in spec.objects:
        half = obj.size / 2.0
        if obj.shape == "square":
            mask = (np.abs(px - obj.cx) <= half) & (np.abs(py - obj.cy) <= half)
        elif obj.shape == "circle":
            mask = (px - obj.cx) ** 2 + (py - obj.cy) ** 2 <= half * half
        elif obj.shape == "triangle":
            t = (py - (obj.cy - half)) / obj.size
            mask = (t >= 0.0) & (t <= 1.0) & (np.abs(px - obj.cx) <= t * half)
        else:
            raise ValueError(f"unknown shape {obj.shape!r}")
        r, g, b = COLOR_RGB[obj.color]
        img[0][mask] = r
        img[1][mask] = g
        img[2][mask] = b
    return img


def render_scene_u8(spec):
    """Compact uint8 render (values 0 or 255) for in-memory caching."""
    return (render_scene(spec) * 255.0).astype(np.uint8)


# ---- question pairs ----


def _distractor_kinds(rng, n, excluded):
    """n (shape, color) pairs drawn uniformly outside the excluded set."""
    pool = [(s, c) for s in SHAPES for c in COLORS if (s, c) not in excluded]
    return [pool[int(rng.integers(len(pool)))] for _ in range(n)]


def _count_scene(rng, color, shape, count, seed):
    d = int(rng.integers(1, 4))
    d = min(d, MAX_OBJECTS - count)
    kinds = [(shape, color)] * count + _distractor_kinds(rng, d, {(shape, color)})
    return place_objects(rng, kinds, seed=seed)


def _number_scene(rng, shape, count, seed):
    d = int(rng.integers(1, 3))
    d = min(d, MAX_OBJECTS - count)
    colors = [COLORS[int(rng.integers(len(COLORS)))] for _ in range(count)]
    excluded = {(shape, c) for c in COLORS}
    kinds = [(shape, c) for c in colors] + _distractor_kinds(rng, d, excluded)
    return place_objects(rng, kinds, seed=seed)


def _other_scene(rng, shape, color, seed):
    d = int(rng.integers(1, 5))
    excluded = {(shape, c) for c in COLORS}
    kinds = [(shape, color)] + _distractor_kinds(rng, d, excluded)
    return place_objects(rng, kinds, seed=seed)


def gen_question_pair(rng, category, pair_id, first_id, seed=0):
    """Two samples sharing question text and category, answers distinct."""
    if category == "count":
        color = COLORS[int(rng.integers(len(COLORS)))]
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        c_a = int(rng.integers(0, MAX_QUESTION_COUNT + 1))
        c_b = int(rng.integers(0, MAX_QUESTION_COUNT))
        if c_b >= c_a:
            c_b += 1
        tokens = ["how", "many", color, shape + "s"]
        scenes = [_count_scene(rng, color, shape, c, seed) for c in (c_a, c_b)]
        answers = [str(c_a), str(c_b)]
    elif category == "number":
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        k = int(rng.integers(1, 5))
        n_no = int(rng.integers(max(0, k - 2), k + 1))
        n_yes = int(rng.integers(k + 1, min(k + 3, MAX_QUESTION_COUNT + 1) + 1))
        tokens = ["are", "there", "more", "than", str(k), shape + "s"]
        scenes = [_number_scene(rng, shape, n, seed) for n in (n_no, n_yes)]
        answers = ["no", "yes"]
        if rng.random() < 0.5:
            scenes.reverse()
            answers.reverse()
    elif category == "other":
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        col_a = COLORS[int(rng.integers(len(COLORS)))]
        col_b = COLORS[int(rng.integers(len(COLORS) - 1))]
        if COLORS.index(col_b) >= COLORS.index(col_a):
            col_b = COLORS[COLORS.index(col_b) + 1]
        tokens = ["what", "color", "is", "the", shape]
        scenes = [_other_scene(rng, shape, c, seed) for c in (col_a, col_b)]
        answers = [col_a, col_b]
    else:
        raise ValueError(f"unknown category {category!r}")

    return (
        Sample(first_id, pair_id, "A", category, tokens, answers[0], scenes[0]),
        Sample(first_id + 1, pair_id, "B", category, tokens, answers[1], scenes[1]),
    )


def pair_seed(master_seed, category_index, pair_index):
    ss = np.random.SeedSequence([int(master_seed), int(category_index), int(pair_index)])
    return int(ss.generate_state(1)[0])


def generate_dataset(master_seed, pairs_per_category):
    """Balanced corpus: pairs_per_category pairs of each question type.

    Every pair draws from its own generator seeded by (master seed,
    category, pair index), so generation order never matters and any
    subset is reproducible in isolation.
    """
    samples = []
    pair_id = 0
    next_id = 0
    for ci, category in enumerate(CATEGORIES):
        for pi in range(pairs_per_category):
            seed = pair_seed(master_seed, ci, pi)
            rng = np.random.default_rng(seed)
            a, b = gen_question_pair(rng, category, pair_id, next_id, seed=seed)
            samples.extend([a, b])
            pair_id += 1
            next_id += 2
    return samples


def split_by_pair(samples, val_pairs_per_category, seed):
    """Deterministic train/val split keeping pair members together.

    Per category, a seeded shuffle of its pair ids sends the first
    val_pairs_per_category pairs to validation.
    """
    by_category = {}
    for s in samples:
        by_category.setdefault(s.category, set()).add(s.pair_id)
    val_ids = set()
    rng = np.random.default_rng(seed)
    for category in sorted(by_category):
        ids = sorted(by_category[category])
        if val_pairs_per_category >= len(ids):
            raise ValueError(
                f"cannot hold out {val_pairs_per_category} pairs from "
                f"{len(ids)} in category {category!r}"
            )
        perm = rng.permutation(len(ids))
        val_ids.update(ids[i] for i in perm[:val_pairs_per_category])
    train = [s for s in samples if s.pair_id not in val_ids]
    val = [s for s in samples if s.pair_id in val_ids]
    return train, val


# ---- file format ----


def _format_objects(objects):
    return ";".join(
        f"{o.shape},{o.color},{o.cx!r},{o.cy!r},{o.size!r}" for o in objects
    )


def write_dataset(samples, path):
    """One tab-separated record per line; floats via repr for exact round-trips."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                "\t".join(
                    [
                        str(s.id),
                        str(s.pair_id),
                        s.member,
                        s.category,
                        " ".join(s.question_tokens),
                        s.answer,
                        _format_objects(s.scene.objects),
                        str(s.scene.seed),
                    ]
                )
                + "\n"
            )


def _parse_objects(text, lineno):
    if not text:
        return []
    objects = []
    for part in text.split(";"):
        fields = part.split(",")
        if len(fields) != 5:
            raise DatasetFormatError(
                f"line {lineno}: object entry {part!r} has {len(fields)} fields, expected 5"
            )
        shape, color = fields[0], fields[1]
        if shape not in SHAPES:
            raise DatasetFormatError(f"line {lineno}: unknown shape {shape!r}")
        if color not in COLORS:
            raise DatasetFormatError(f"line {lineno}: unknown color {color!r}")
        try:
            cx, cy, size = (float(x) for x in fields[2:])
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: non-numeric object geometry in {part!r}") from None
        objects.append(SceneObject(shape, color, cx, cy, size))
    return objects


def read_dataset(path):
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 8:
                raise DatasetFormatError(
                    f"line {lineno}: expected 8 tab-separated fields, got {len(fields)}"
                )
            sid, pid, member, category, tokens, answer, objects, seed = fields
            if member not in ("A", "B"):
                raise DatasetFormatError(f"line {lineno}: bad member {member!r}")
            if category not in CATEGORIES:
                raise DatasetFormatError(f"line {lineno}: unknown category {category!r}")
            if answer not in ANSWER_INDEX:
                raise DatasetFormatError(f"line {lineno}: unknown answer {answer!r}")
            try:
                sid_i, pid_i, seed_i = int(sid), int(pid), int(seed)
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: non-integer id/pair/seed field") from None
            samples.append(
                Sample(
                    id=sid_i,
                    pair_id=pid_i,
                    member=member,
                    category=category,
                    question_tokens=tokens.split(" ") if tokens else [],
                    answer=answer,
                    scene=SceneSpec(objects=_parse_objects(objects, lineno), seed=seed_i),
                )
            )
    return samples
