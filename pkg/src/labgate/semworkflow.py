"""SEM periodicity and particle-size analysis.

Calibration lookup binds the analysis to one physical microscope (exact
magnification match, no interpolation).  Periodicity comes from a
Hann-windowed 2-D FFT with parabolic sub-bin refinement; particle sizing
uses an Otsu threshold and 4-connected component labeling.  Everything
is deterministic; images are immutable inputs.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from labgate.errors import ToolError

MIN_IMAGE_SIDE = 16
PEAK_SNR_FLOOR = 3.0


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale image, row-major."""

    pixels: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        object.__setattr__(self, "pixels", px)
        if px.ndim != 2:
            raise ValueError("pixels must be 2-D")
        if px.shape[0] < MIN_IMAGE_SIDE or px.shape[1] < MIN_IMAGE_SIDE:
            raise ToolError("IMAGE_TOO_SMALL",
                            f"need >= {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, "
                            f"got {px.shape[1]}x{px.shape[0]}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class CalibrationEntry:
    nm_per_px: float
    info_bar_px: int

    def __post_init__(self):
        if not (self.nm_per_px > 0 and math.isfinite(self.nm_per_px)):
            raise ValueError("nm_per_px must be finite and positive")
        if self.info_bar_px < 0:
            raise ValueError("info_bar_px must be >= 0")


_MAG_RE = re.compile(r"^x([0-9]+)$")


@dataclass(frozen=True)
class CalibrationTable:
    """Per-device magnification map; a different instrument of the same
    model carries different values."""

    entries: dict

    def __post_init__(self):
        for label in self.entries:
            if not _MAG_RE.match(label):
                raise ValueError(f"bad magnification label {label!r}")


@dataclass(frozen=True)
class PeriodicityReport:
    period_nm: float
    period_px: float
    orientation_deg: float
    peak_snr: float


@dataclass(frozen=True)
class ParticleReport:
    count: int
    mean_d_nm: float | None
    median_d_nm: float | None
    std_d_nm: float | None
    histogram: tuple[int, ...]
    hist_bin_nm: float  # bin width; bins span [0, 2 * max diameter]


def parse_mag_label(label: str) -> int:
    """``x40000`` -> 40000; anything else is rejected."""
    if isinstance(label, str):
        m = _MAG_RE.match(label)
        if m:
            return int(m.group(1))
    raise ToolError("BAD_MAG_LABEL", f"magnification label {label!r} must match x<digits>")


def parse_calibration(text: str) -> CalibrationTable:
    """Calibration file: ``<mag_label> <nm_per_px> <info_bar_px>`` per
    line; '#' comments and blank lines ignored."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"calibration line {lineno}: expected 3 fields")
        label = parts[0]
        parse_mag_label(label)
        entries[label] = CalibrationEntry(float(parts[1]), int(parts[2]))
    return CalibrationTable(entries)


def pixel_scale(table: CalibrationTable, label: str) -> CalibrationEntry:
    """Exact-match lookup; interpolating between magnifications would
    invent physics, so it is an error instead."""
    parse_mag_label(label)
    entry = table.entries.get(label)
    if entry is None:
        raise ToolError("UNKNOWN_MAGNIFICATION", f"no calibration for {label!r}")
    return entry


def read_pgm(data: bytes) -> GrayImage:
    """Binary PGM (P5, maxval 255)."""
    if not data.startswith(b"P5"):
        raise ToolError("BAD_IMAGE", "not a binary PGM (P5)")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # then exactly one whitespace byte before the raster
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ToolError("BAD_IMAGE", "truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace separating header and raster
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise ToolError("BAD_IMAGE", "non-numeric PGM header") from None
    if maxval != 255:
        raise ToolError("BAD_IMAGE", f"maxval must be 255, got {maxval}")
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise ToolError("BAD_IMAGE", "truncated PGM raster")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(px.copy())


def write_pgm(image: GrayImage) -> bytes:
    header = f"P5 {image.width} {image.height} 255\n".encode("ascii")
    return header + image.pixels.tobytes()


def crop_info_bar(image: GrayImage, info_bar_px: int) -> GrayImage:
    """Remove the instrument info bar: the bottom rows of the frame."""
    if info_bar_px < 0:
        raise ValueError("info_bar_px must be >= 0")
    if info_bar_px == 0:
        return image
    if image.height - info_bar_px < MIN_IMAGE_SIDE:
        raise ToolError("CROP_TOO_LARGE",
                        f"cropping {info_bar_px} of {image.height} rows leaves "
                        f"less than {MIN_IMAGE_SIDE}")
    return GrayImage(image.pixels[:image.height - info_bar_px, :].copy())


def _parabolic_refine(lm: float, l0: float, lp: float) -> float:
    """Sub-bin offset of a parabola through three log-power samples."""
    denom = lm - 2.0 * l0 + lp
    if denom == 0.0:
        return 0.0
    delta = 0.5 * (lm - lp) / denom
    # the true peak lies inside [-0.5, 0.5]; anything else means the
    # parabola is degenerate, so stay on the bin center
    if not -0.5 <= delta <= 0.5:
        return 0.0
    return delta


def periodicity_fft(image: GrayImage, nm_per_px: float) -> PeriodicityReport:
    """Dominant spatial period from the windowed 2-D power spectrum.

    Mean subtraction, separable Hann window, |FFT|^2; DC and every bin
    with radial frequency below 2 bins are excluded from the search.
    The dominant bin (ties: smallest fy, then smallest fx) is refined by
    1-D parabolic interpolation of log power along each axis, and the
    report is rejected when the peak is less than 3x the median non-DC
    power (no meaningful periodicity).
    """
    h, w = image.height, image.width
    a = image.pixels.astype(np.float64)
    a -= a.mean()
    win = np.hanning(h)[:, None] * np.hanning(w)[None, :]
    power = np.abs(np.fft.fft2(a * win)) ** 2

    iy = np.fft.fftfreq(h) * h   # signed bin indices
    ix = np.fft.fftfreq(w) * w
    r2 = iy[:, None] ** 2 + ix[None, :] ** 2
    # low cut: radial frequency >= 2 bins; high cut: 0.5 cycles/px keeps
    # the reported period at or above the 2 px Nyquist floor
    f2 = (iy[:, None] / h) ** 2 + (ix[None, :] / w) ** 2
    searchable = (r2 >= 4.0) & (f2 <= 0.25)

    median_power = float(np.median(power.ravel()[1:]))  # all bins except DC

    masked = np.where(searchable, power, -1.0)
    best = float(masked.max())
    if best < 0.0:
        raise ToolError("NO_DOMINANT_PEAK", "image too small for any candidate bin")
    rows, cols = np.nonzero(masked == best)
    # ties resolve to the smallest fy, then the smallest fx
    r, c = min(zip(rows.tolist(), cols.tolist()),
               key=lambda rc: (float(iy[rc[0]]), float(ix[rc[1]])))
    peak_snr = best / median_power if median_power > 0 else 0.0
    if peak_snr < PEAK_SNR_FLOOR:
        raise ToolError("NO_DOMINANT_PEAK",
                        f"peak snr {peak_snr:.3f} below floor {PEAK_SNR_FLOOR}")

    def logp(row, col):
        v = float(power[row % h, col % w])
        return math.log(v) if v > 0 else -math.inf

    l0 = logp(r, c)
    dy = dx = 0.0
    lm, lp = logp(r - 1, c), logp(r + 1, c)
    if math.isfinite(lm) and math.isfinite(lp) and math.isfinite(l0):
        dy = _parabolic_refine(lm, l0, lp)
    lm, lp = logp(r, c - 1), logp(r, c + 1)
    if math.isfinite(lm) and math.isfinite(lp) and math.isfinite(l0):
        dx = _parabolic_refine(lm, l0, lp)

    fy = (float(iy[r]) + dy) / h   # cycles per pixel
    fx = (float(ix[c]) + dx) / w
    f_mag = math.hypot(fx, fy)
    period_px = 1.0 / f_mag
    orientation = math.degrees(math.atan2(fy, fx)) % 180.0
    return PeriodicityReport(period_px * nm_per_px, period_px, orientation, peak_snr)


def otsu_threshold(pixels: np.ndarray) -> int:
    """Otsu's threshold on the 256-bin histogram.

    Maximizes the between-class variance w0*w1*(mu1-mu0)^2 over the
    split (<= t | > t); on ties the lowest threshold wins (scan order is
    ascending and only strict improvements move the winner).
    """
    hist = np.bincount(pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    c0 = np.cumsum(hist)
    m0 = np.cumsum(hist * levels)
    mt = float(m0[-1])
    best_t = 0
    best_score = -1.0
    for t in range(256):
        n0 = float(c0[t])
        n1 = total - n0
        if n0 == 0.0 or n1 == 0.0:
            continue
        mu0 = float(m0[t]) / n0
        mu1 = (mt - float(m0[t])) / n1
        score = (n0 / total) * (n1 / total) * (mu1 - mu0) ** 2
        if score > best_score:
            best_score = score
            best_t = t
    return best_t


def label_components_4(mask: np.ndarray) -> list[int]:
    """Areas of 4-connected foreground components.

    Two-pass union-find with labels assigned in row-major scan order;
    returned areas follow first-appearance order (deterministic).
    """
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int64)
    parent = [0]  # parent[label]; 0 is background

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    nxt = 1
    for r in range(h):
        row = mask[r]
        for c in range(w):
            if not row[c]:
                continue
            up = labels[r - 1, c] if r > 0 else 0
            left = labels[r, c - 1] if c > 0 else 0
            if up == 0 and left == 0:
                parent.append(nxt)
                labels[r, c] = nxt
                nxt += 1
            elif up == 0 or left == 0:
                labels[r, c] = up or left
            else:
                ru, rl = find(up), find(left)
                labels[r, c] = min(ru, rl)
                if ru != rl:
                    parent[max(ru, rl)] = min(ru, rl)
    areas: dict[int, int] = {}
    order: list[int] = []
    for r in range(h):
        for c in range(w):
            lab = labels[r, c]
            if lab == 0:
                continue
            root = find(int(lab))
            if root not in areas:
                areas[root] = 0
                order.append(root)
            areas[root] += 1
    return [areas[root] for root in order]


def particle_sizing(image: GrayImage, nm_per_px: float, min_area_px: int = 5,
                    bright_particles: bool = True) -> ParticleReport:
    """Equivalent-diameter statistics of thresholded particles.

    d = 2 * sqrt(area / pi) * nm_per_px per component; components below
    min_area_px are dropped.  count 0 is a valid report (null
    statistics), not a failure.
    """
    t = otsu_threshold(image.pixels)
    mask = image.pixels > t if bright_particles else image.pixels <= t
    areas = [a for a in label_components_4(mask) if a >= min_area_px]
    if not areas:
        return ParticleReport(0, None, None, None, tuple([0] * 16), 0.0)
    d = np.array(sorted(2.0 * np.sqrt(np.array(areas, dtype=np.float64) / math.pi)
                        * nm_per_px))
    max_d = float(d[-1])
    hist, _ = np.histogram(d, bins=16, range=(0.0, 2.0 * max_d))
    return ParticleReport(
        int(d.shape[0]), float(np.mean(d)), float(np.median(d)),
        float(np.std(d)), tuple(int(x) for x in hist), 2.0 * max_d / 16.0)


def run_sem_tool(args, image: GrayImage, table: CalibrationTable) -> dict:
    """Execute the SEM workflow on gate-validated arguments.

    Calibrates via mag_label, crops the info bar, always runs the
    periodicity analysis and adds particle sizing when requested.
    ``crop_bottom_px`` is honored when an extended tool variant admitted
    it through the gate; the plain schema rejects it.  Returns a plain
    dict ready for canonical JSON serialization.
    """
    entry = pixel_scale(table, args["mag_label"])
    crop_rows = args.get("crop_bottom_px", entry.info_bar_px)
    cropped = crop_info_bar(image, crop_rows)
    periodicity = periodicity_fft(cropped, entry.nm_per_px)
    out = {
        "file_id": args["file_id"],
        "mag_label": args["mag_label"],
        "magnification": parse_mag_label(args["mag_label"]),
        "nm_per_px": entry.nm_per_px,
        "cropped_rows": crop_rows,
        "periodicity": {
            "period_nm": periodicity.period_nm,
            "period_px": periodicity.period_px,
            "orientation_deg": periodicity.orientation_deg,
            "peak_snr": periodicity.peak_snr,
        },
    }
    if args.get("particle_analysis", False):
        particles = particle_sizing(cropped, entry.nm_per_px)
        out["particles"] = {
            "count": particles.count,
            "mean_d_nm": particles.mean_d_nm,
            "median_d_nm": particles.median_d_nm,
            "std_d_nm": particles.std_d_nm,
            "histogram": list(particles.histogram),
            "hist_bin_nm": particles.hist_bin_nm,
        }
    return out
