"""Plate datasets: token table, filename labels, splits, synthetic plates."""

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LabelTooLong, TooFewSamples, UnknownSymbol, UnreadableImage

# Persian name -> (ASCII token, Persian rendering). Digits keep their form.
LETTERS = [
    ("alef", "A", "الف"),
    ("be", "B", "ب"),
    ("pe", "P", "پ"),
    ("te", "T", "ت"),
    ("se", "C", "ث"),
    ("jim", "J", "ج"),
    ("dal", "d", "د"),
    ("ze", "Z", "ز"),
    ("sin", "s", "س"),
    ("shin", "H", "ش"),
    ("sad", "U", "ص"),
    ("ta", "I", "ط"),
    ("eyn", "E", "ع"),
    ("fa", "F", "ف"),
    ("qhaf", "Q", "ق"),
    ("kaf", "K", "ک"),
    ("gaf", "G", "گ"),
    ("lam", "L", "ل"),
    ("mim", "M", "م"),
    ("non", "N", "ن"),
    ("he", "h", "ه"),
    ("vav", "V", "و"),
    ("ye", "Y", "ی"),
    ("tashrifat", "W", "تشریفات"),
    ("malol", "R", "معلول"),
    ("D", "D", "D"),
    ("S", "S", "S"),
]
DIGITS = "0123456789"
SYMBOLS = DIGITS + "".join(tok for _, tok, _ in LETTERS)
PAD = "X"
PLATE_LENGTH = 8
TO_PERSIAN = {**{d: d for d in DIGITS}, **{tok: fa for _, tok, fa in LETTERS}}
FROM_PERSIAN = {fa: tok for tok, fa in TO_PERSIAN.items()}

IMAGE_WIDTH = 200
IMAGE_HEIGHT = 50
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".pgm"}

_STEM = re.compile(r"^(?P<label>.*?)(?:_\d+)?$")


def alphabet_for(kind):
    """Symbol string for ``'full'`` (37 symbols) or ``'digits'``."""
    if kind == "full":
        return SYMBOLS
    if kind == "digits":
        return DIGITS
    raise ValueError(f"unknown alphabet {kind!r}")


def encode_label(text, alphabet=SYMBOLS, source=None):
    """Tokens -> class ids. A right-padding run of ``X`` is stripped."""
    text = text.rstrip(PAD)
    index = {s: i for i, s in enumerate(alphabet)}
    ids = []
    for ch in text:
        if ch not in index:
            raise UnknownSymbol(ch, source)
        ids.append(index[ch])
    if len(ids) > PLATE_LENGTH:
        raise LabelTooLong(f"label {text!r} has {len(ids)} symbols, at most {PLATE_LENGTH} allowed")
    return ids


def decode_label(ids, alphabet=SYMBOLS):
    return "".join(alphabet[i] for i in ids)


def to_persian(tokens):
    return "".join(TO_PERSIAN.get(t, t) for t in tokens)


@dataclass
class PlateSample:
    image: np.ndarray
    label: list
    source: str = ""
    boxes: list = field(default_factory=list)


# ----------------------------------------------------------------------------
# image I/O
# ----------------------------------------------------------------------------
def read_gray(path):
    """Read any PIL-readable raster as a float array in [0, 1], shape (H, W)."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise UnreadableImage(f"cannot read image {path}: {exc}") from exc


def write_gray(path, image):
    from PIL import Image

    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr[..., 0]
    Image.fromarray(np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8), mode="L").save(path)


def resize_gray(image, width=IMAGE_WIDTH, height=IMAGE_HEIGHT):
    """Bilinear resize of a (H, W) or (H, W, 1) array; returns (height, width, 1)."""
    from PIL import Image

    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., 0]
    if arr.shape == (height, width):
        return arr[..., None].copy()
    im = Image.fromarray(arr.astype(np.float32), mode="F")
    out = np.asarray(im.resize((width, height), Image.BILINEAR), dtype=np.float64)
    return np.clip(out, 0.0, 1.0)[..., None]


def label_from_filename(path, alphabet=SYMBOLS):
    stem = Path(path).stem
    return encode_label(_STEM.match(stem).group("label"), alphabet, source=str(path))


def _image_files(path):
    return sorted(p for p in Path(path).iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)


def load_labeled_dir(path, alphabet=SYMBOLS):
    """Plates whose label is the file name (``<LABEL>[_<n>].<ext>``), resized to 200x50."""
    samples = []
    for p in _image_files(path):
        label = label_from_filename(p, alphabet)
        samples.append(PlateSample(resize_gray(read_gray(p)), label, str(p)))
    return samples


def load_manifest(path, alphabet=SYMBOLS):
    """Tab-separated ``relative_path<TAB>label_tokens`` lines, paths relative to the manifest."""
    root = Path(path).parent
    samples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        rel, _, tokens = line.partition("\t")
        label = encode_label(tokens.strip(), alphabet, source=f"{path}:{lineno}")
        samples.append(PlateSample(resize_gray(read_gray(root / rel)), label, str(root / rel)))
    return samples


def load_scene_dir(path, alphabet=SYMBOLS):
    """Full-size scenes named by their plate label, each with a sibling box file."""
    from .detection import read_annotations

    samples = []
    for p in _image_files(path):
        label = label_from_filename(p, alphabet)
        image = read_gray(p)[..., None]
        ann = p.with_suffix(".txt")
        boxes = read_annotations(ann, image.shape[1], image.shape[0]) if ann.exists() else []
        samples.append(PlateSample(image, label, str(p), boxes))
    return samples


# ----------------------------------------------------------------------------
# splitting
# ----------------------------------------------------------------------------
def split(samples, fractions=(0.8, 0.1, 0.1), seed=0):
    """Seeded shuffle, then contiguous train/val/test partition.

    val and test sizes are floored; the remainder goes to train.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    n = len(samples)
    if n < 10:
        raise TooFewSamples(f"need at least 10 samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(np.floor(n * fractions[1] + 1e-9))
    n_test = int(np.floor(n * fractions[2] + 1e-9))
    n_train = n - n_val - n_test
    picked = [samples[i] for i in order]
    return picked[:n_train], picked[n_train : n_train + n_val], picked[n_train + n_val :]


# ----------------------------------------------------------------------------
# synthetic plates
# ----------------------------------------------------------------------------
GLYPH_ROWS, GLYPH_COLS = 7, 5
GLYPH_SCALE = 4
SLOT_PITCH = 24
SLOT_X0 = 4
SLOT_Y0 = (IMAGE_HEIGHT - GLYPH_ROWS * GLYPH_SCALE) // 2
GLYPH_SEED = 2023
MIN_GLYPH_DISTANCE = 4


def make_glyphs(n_symbols=len(SYMBOLS), seed=GLYPH_SEED, min_distance=MIN_GLYPH_DISTANCE):
    """One random 7x5 binary pattern per symbol id, pairwise Hamming >= ``min_distance``.

    Draws are repeated with the next seed until the set qualifies.
    """
    while True:
        rng = np.random.default_rng(seed)
        glyphs = rng.random((n_symbols, GLYPH_ROWS, GLYPH_COLS)) < 0.5
        flat = glyphs.reshape(n_symbols, -1)
        dist = (flat[:, None, :] != flat[None, :, :]).sum(axis=-1)
        np.fill_diagonal(dist, GLYPH_ROWS * GLYPH_COLS)
        # every glyph needs ink in its first and last column so adjacent
        # slots stay visually separated by background
        edges = glyphs[:, :, 0].any(axis=1) & glyphs[:, :, -1].any(axis=1)
        if dist.min() >= min_distance and edges.all():
            return glyphs
        seed += 1


_GLYPHS = None


def glyphs():
    global _GLYPHS
    if _GLYPHS is None:
        _GLYPHS = make_glyphs()
    return _GLYPHS


def slot_position(i):
    """Nominal top-left pixel of glyph slot ``i``."""
    return SLOT_X0 + i * SLOT_PITCH, SLOT_Y0


def synth_plate(label, style_seed, noise=None, jitter=2, alphabet=SYMBOLS):
    """Render ``label`` (ids into ``alphabet``) as a 50x200 grayscale plate.

    ``noise`` is the additive uniform noise amplitude (drawn in [0, 0.1] from
    the style seed when None); ``jitter`` bounds the per-glyph pixel offset.
    Pixel values are quantised to 8-bit levels.
    """
    label = [int(c) for c in label]
    if not 1 <= len(label) <= PLATE_LENGTH:
        raise LabelTooLong(f"synthetic plates carry 1..{PLATE_LENGTH} symbols, got {len(label)}")
    ids = [SYMBOLS.index(alphabet[c]) for c in label]
    rng = np.random.default_rng(style_seed)
    background = rng.uniform(0.55, 0.95)
    ink = background - rng.uniform(0.4, 0.5)
    amp = rng.uniform(0.0, 0.1) if noise is None else float(noise)
    img = np.full((IMAGE_HEIGHT, IMAGE_WIDTH), background)
    pats = glyphs()
    for i, sym in enumerate(ids):
        x0, y0 = slot_position(i)
        if jitter:
            dx, dy = rng.integers(-jitter, jitter + 1, size=2)
            x0, y0 = x0 + int(dx), y0 + int(dy)
        big = np.kron(pats[sym], np.ones((GLYPH_SCALE, GLYPH_SCALE), dtype=bool))
        region = img[y0 : y0 + big.shape[0], x0 : x0 + big.shape[1]]
        region[big] = ink
    if amp > 0:
        img = img + rng.uniform(-amp, amp, size=img.shape)
    img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    return PlateSample(img[..., None], label, f"synth:{decode_label(label, alphabet)}:{style_seed}")


def synth_dataset(n, alphabet=SYMBOLS, lengths=None, seed=0):
    """``n`` synthetic plates with labels over ``alphabet``.

    ``lengths`` maps label length -> weight (default: always 8).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lengths = lengths or {PLATE_LENGTH: 1.0}
    ls = np.array(sorted(lengths), dtype=int)
    w = np.array([lengths[k] for k in ls], dtype=float)
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        L = int(rng.choice(ls, p=w / w.sum()))
        label = [int(c) for c in rng.integers(0, len(alphabet), size=L)]
        style = int(rng.integers(0, 2**31 - 1))
        samples.append(synth_plate(label, style, alphabet=alphabet))
    return samples


def symbol_histogram(samples, alphabet=SYMBOLS):
    """Count of each symbol over all labels, in alphabet order."""
    counts = Counter(alphabet[c] for s in samples for c in s.label)
    return {sym: counts.get(sym, 0) for sym in alphabet}


def synth_scene(plates, width=400, height=200, seed=0):
    """Paste plates onto a larger noisy canvas; returns a sample with truth boxes.

    The scene's label is that of the first plate.
    """
    from .detection import BoundingBox

    rng = np.random.default_rng(seed)
    canvas = rng.uniform(0.2, 0.6) + rng.uniform(-0.05, 0.05, size=(height, width))
    boxes = []
    for plate in plates:
        ph, pw = plate.image.shape[:2]
        for _ in range(100):
            x0 = int(rng.integers(0, width - pw + 1))
            y0 = int(rng.integers(0, height - ph + 1))
            box = BoundingBox(x0, y0, x0 + pw, y0 + ph)
            if all(box.intersection(b) == 0 for b in boxes):
                break
        else:
            raise ValueError("could not place plates without overlap")
        canvas[y0 : y0 + ph, x0 : x0 + pw] = plate.image[..., 0]
        boxes.append(box)
    canvas = np.round(np.clip(canvas, 0.0, 1.0) * 255.0) / 255.0
    return PlateSample(canvas[..., None], list(plates[0].label), f"scene:{seed}", boxes)
