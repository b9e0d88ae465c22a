"""Synthetic city and parking time-series generation.

The generator stands in for proprietary sensor data and is shaped to exhibit
the structure the model exploits: four functional zone types with anti-phase
daily occupancy, each type split across two distant clusters (so latent-node
pooling has something purely contextual aggregation cannot see), city-wide
zone-level fluctuation with strong temporal autocorrelation, and demand that
diffuses over the road-reachable neighborhood.

All randomness comes from numpy's counter-based Philox generator, seeded via
SeedSequence((seed, stream_id)) with one fixed stream id per purpose, so any
single component (e.g. local noise) can be switched off without disturbing
the draws of the others, and regeneration is bit-identical across platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import ParkingLot, RoadNetwork, distance_matrix
from .manifest import parse_bool, read_kv, write_kv

ZONE_COUNT = 4
FEATURE_WIDTH = 16  # zone mix 4 + capacity 1 + time-of-day 4 + population 1 + POI 6

# POI-category intensities per zone type (office, retail, food, transit,
# leisure, school).  Fixed constants: POI features are a pure function of the
# zone mixture, so a city reloaded from disk reproduces them exactly.
POI_PROFILES = np.array(
    [
        [0.90, 0.40, 0.55, 0.50, 0.10, 0.15],  # business
        [0.10, 0.30, 0.25, 0.20, 0.30, 0.70],  # residential
        [0.15, 0.80, 0.90, 0.40, 0.85, 0.05],  # entertainment
        [0.35, 0.55, 0.40, 0.90, 0.25, 0.30],  # mixed/transit
    ]
)

# stream ids for SeedSequence((seed, stream))
_S_PLACEMENT = 0
_S_CAPACITY = 1
_S_MASKING = 2
_S_ZONE_FLUCT = 3
_S_LOCAL_NOISE = 4
_S_POPULATION = 5


def _stream(seed, stream_id):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream_id))))


@dataclass(frozen=True)
class CitySpec:
    n_lots: int = 200
    width_km: float = 6.0
    height_km: float = 3.0
    spacing_km: float = 0.2
    cap_min: int = 30
    cap_max: int = 300
    labeled_frac: float = 0.30
    seed: int = 0

    def validate(self):
        if self.n_lots < 2:
            raise ValueError("city needs at least 2 lots")
        if not 0.0 < self.labeled_frac <= 1.0:
            raise ValueError(f"labeled fraction must be in (0, 1], got {self.labeled_frac}")
        if self.width_km <= 0 or self.height_km <= 0:
            raise ValueError("degenerate bounding box")
        if self.spacing_km <= 0:
            raise ValueError("grid spacing must be positive")
        if not 1 <= self.cap_min <= self.cap_max:
            raise ValueError("capacity range must satisfy 1 <= cap_min <= cap_max")


@dataclass(frozen=True)
class SeriesSpec:
    n_steps: int = 960
    steps_per_day: int = 96  # 15-minute resolution
    zone_rho: float = 0.97
    zone_std: float = 0.08
    diffusion: float = 0.5
    noise_std: float = 0.03
    eps_km: float = 1.0  # neighborhood radius for the diffusion mixing

    def validate(self):
        if self.n_steps < 1:
            raise ValueError("series needs at least one step")
        if self.steps_per_day < 2:
            raise ValueError("steps per day must be >= 2")
        if not 0.0 <= self.zone_rho < 1.0:
            raise ValueError("zone fluctuation rho must be in [0, 1)")
        if not 0.0 <= self.diffusion <= 1.0:
            raise ValueError("diffusion strength must be in [0, 1]")


@dataclass
class SyntheticCity:
    spec: CitySpec
    lots: list
    net: RoadNetwork
    zone_mix: np.ndarray  # N x ZONE_COUNT rows on the simplex
    districts: np.ndarray  # generative cluster id per lot, 0..2*ZONE_COUNT-1

    @property
    def n_lots(self):
        return len(self.lots)

    @property
    def capacities(self):
        return np.array([lot.capacity for lot in self.lots], dtype=np.int64)

    @property
    def labeled_flags(self):
        return np.array([lot.labeled for lot in self.lots], dtype=bool)


@dataclass
class SeriesData:
    spec: SeriesSpec
    pa: np.ndarray  # S x N integer vacancy counts
    population: np.ndarray  # S x N activity proxy in [0, 1]


def labeled_count(n_lots, frac):
    # floor rule, but never an empty sensor set
    return max(1, int(np.floor(frac * n_lots)))


# Sensor rollout is district-clustered: the first cluster of each zone-type
# pair gets covered heavily before its distant twin sees any sensors, the way
# real deployments go district by district.  This leaves the twin clusters
# dependent on far-away same-type lots for real-time information.
SENSOR_RICH_WEIGHT = 24.0


def _sensor_keys(seed, districts):
    """Per-lot priority keys; the m smallest form the labeled set of size m.

    Keys are Exp(1)/weight draws, so taking prefixes of the sorted order is
    weighted sampling without replacement, and the sets are nested across
    every labeled fraction.
    """
    u = _stream(seed, _S_MASKING).random(len(districts))
    weights = np.where(districts % 2 == 0, SENSOR_RICH_WEIGHT, 1.0)
    return -np.log1p(-u) / weights


def _labeled_ids(seed, districts, frac):
    keys = _sensor_keys(seed, districts)
    m = labeled_count(len(districts), frac)
    return set(np.argsort(keys, kind="stable")[:m].tolist())


def zone_pattern_table(steps_per_day):
    """Daily availability fraction per zone type, (steps_per_day, ZONE_COUNT).

    Business and residential are anti-phase; entertainment dips in the
    evening; the mixed/transit zone has two daily troughs.  All values stay
    inside (0.05, 0.95) so capacity clipping stays inactive for the clean
    signal.
    """
    h = np.arange(steps_per_day) * 24.0 / steps_per_day
    two_pi = 2.0 * np.pi
    business = 0.55 + 0.38 * np.cos(two_pi * (h - 2.0) / 24.0)
    residential = 0.55 - 0.38 * np.cos(two_pi * (h - 2.0) / 24.0)
    entertainment = 0.60 - 0.34 * np.cos(two_pi * (h - 21.0) / 24.0)
    mixed = 0.55 - 0.25 * np.cos(2.0 * two_pi * (h - 8.5) / 24.0)
    return np.stack([business, residential, entertainment, mixed], axis=1)


def _place_centers(spec, rng):
    """Two cluster centers per zone type, same-type pairs in opposite sectors.

    The box is cut into a 4 x 2 sector grid; the pair for one type occupies a
    sector and its antipode, which keeps same-type clusters several
    neighborhood radii apart.
    """
    sw, sh = spec.width_km / 4.0, spec.height_km / 2.0
    type_for_pair = rng.permutation(ZONE_COUNT)
    centers, types = [], []
    for pair_idx, zone in enumerate(type_for_pair):
        for ix, iy in ((pair_idx, 0), (3 - pair_idx, 1)):
            cx = (ix + 0.5) * sw + rng.uniform(-0.2, 0.2) * sw
            cy = (iy + 0.5) * sh + rng.uniform(-0.2, 0.2) * sh
            centers.append((cx, cy))
            types.append(int(zone))
    return np.array(centers), np.array(types)


def generate_city(spec: CitySpec) -> SyntheticCity:
    spec.validate()
    n = spec.n_lots
    place_rng = _stream(spec.seed, _S_PLACEMENT)
    centers, center_types = _place_centers(spec, place_rng)

    assignment = place_rng.integers(0, len(centers), size=n)
    scatter = place_rng.normal(0.0, 0.35, size=(n, 2))
    xy = centers[assignment] + scatter
    xy[:, 0] = np.clip(xy[:, 0], 0.02, spec.width_km - 0.02)
    xy[:, 1] = np.clip(xy[:, 1], 0.02, spec.height_km - 0.02)

    # soft zone membership from proximity to every center; lots between
    # clusters end up genuinely mixed
    d2 = ((xy[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    w = np.exp(-d2 / (2.0 * 0.7**2))
    mix = np.zeros((n, ZONE_COUNT))
    for c in range(len(centers)):
        mix[:, center_types[c]] += w[:, c]
    mix += 0.02
    mix /= mix.sum(axis=1, keepdims=True)

    cap_rng = _stream(spec.seed, _S_CAPACITY)
    caps = cap_rng.integers(spec.cap_min, spec.cap_max + 1, size=n)

    districts = assignment.astype(np.int64)
    labeled_ids = _labeled_ids(spec.seed, districts, spec.labeled_frac)

    lots = [
        ParkingLot(
            id=i,
            x_km=float(xy[i, 0]),
            y_km=float(xy[i, 1]),
            capacity=int(caps[i]),
            labeled=(i in labeled_ids),
        )
        for i in range(n)
    ]
    net = RoadNetwork(0.0, 0.0, spec.width_km, spec.height_km, spec.spacing_km)
    return SyntheticCity(spec=spec, lots=lots, net=net, zone_mix=mix, districts=districts)


def with_labeled_fraction(city: SyntheticCity, frac: float) -> SyntheticCity:
    """Same city, different sensor coverage.

    Reuses the city's masking stream, so sweeping the fraction produces
    nested labeled sets (every sensor kept at 10% is still present at 50%).
    """
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"labeled fraction must be in (0, 1], got {frac}")
    keep = _labeled_ids(city.spec.seed, city.districts, frac)
    lots = [replace(lot, labeled=(lot.id in keep)) for lot in city.lots]
    return SyntheticCity(
        spec=replace(city.spec, labeled_frac=frac),
        lots=lots,
        net=city.net,
        zone_mix=city.zone_mix.copy(),
        districts=city.districts.copy(),
    )


def generate_observations(city: SyntheticCity, sspec: SeriesSpec) -> SeriesData:
    sspec.validate()
    n, steps = city.n_lots, sspec.n_steps
    seed = city.spec.seed
    mix = city.zone_mix
    caps = city.capacities.astype(float)

    patterns = zone_pattern_table(sspec.steps_per_day)  # (steps_per_day, Z)
    tod = np.arange(steps) % sspec.steps_per_day
    base = patterns[tod] @ mix.T  # (S, N) clean availability fraction

    # city-wide AR(1) fluctuation per zone type: distant same-type lots move
    # together, which is exactly the correlation SCConv is meant to capture
    fluct_rng = _stream(seed, _S_ZONE_FLUCT)
    shocks = fluct_rng.standard_normal((steps, ZONE_COUNT)) * sspec.zone_std
    fluct = np.zeros((steps, ZONE_COUNT))
    state = np.zeros(ZONE_COUNT)
    for t in range(steps):
        state = sspec.zone_rho * state + shocks[t]
        fluct[t] = state
    frac = base + fluct @ mix.T

    if sspec.diffusion > 0.0:
        dist = distance_matrix(city.net, city.lots)
        mask = (dist <= sspec.eps_km).astype(float)
        row_norm = mask / mask.sum(axis=1, keepdims=True)
        frac = (1.0 - sspec.diffusion) * frac + sspec.diffusion * (frac @ row_norm.T)

    if sspec.noise_std > 0.0:
        noise_rng = _stream(seed, _S_LOCAL_NOISE)
        frac = frac + noise_rng.standard_normal((steps, n)) * sspec.noise_std

    pa = np.rint(caps[None, :] * np.clip(frac, 0.0, 1.0)).astype(np.int64)

    pop_rng = _stream(seed, _S_POPULATION)
    activity = (1.0 - patterns[tod]) @ mix.T  # busy when availability is low
    population = np.clip(activity + pop_rng.standard_normal((steps, n)) * 0.02, 0.0, 1.0)
    return SeriesData(spec=sspec, pa=pa, population=population)


def build_features(city: SyntheticCity, series: SeriesData) -> np.ndarray:
    """Per-step contextual features, (S, N, FEATURE_WIDTH).

    Layout: zone mixture (4) | capacity / max capacity (1) | time-of-day
    sin/cos at one- and two-cycle harmonics (4) | population proxy (1) |
    POI-category intensities (6).
    """
    steps, n = series.pa.shape
    mix = city.zone_mix
    caps = city.capacities.astype(float)
    cap_norm = caps / caps.max()
    poi = mix @ POI_PROFILES

    day_frac = (np.arange(steps) % series.spec.steps_per_day) / series.spec.steps_per_day
    angle = 2.0 * np.pi * day_frac
    tod = np.stack(
        [np.sin(angle), np.cos(angle), np.sin(2 * angle), np.cos(2 * angle)], axis=1
    )

    out = np.empty((steps, n, FEATURE_WIDTH))
    out[:, :, 0:4] = mix[None, :, :]
    out[:, :, 4] = cap_norm[None, :]
    out[:, :, 5:9] = tod[:, None, :]
    out[:, :, 9] = series.population
    out[:, :, 10:16] = poi[None, :, :]
    return out


# ---------------------------------------------------------------------------
# sliding windows


@dataclass
class WindowSample:
    """One training instance: T input steps and tau target steps, all lots.

    `pa` carries the full ground truth; consumers must restrict themselves to
    labeled rows for anything that feeds the model or the loss.
    """

    start: int
    features: np.ndarray  # T x N x M
    pa: np.ndarray  # T x N counts
    targets: np.ndarray  # tau x N counts


def split_boundaries(n_steps, fractions=(0.6, 0.2, 0.2)):
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three values summing to 1, got {fractions}")
    b1 = int(np.floor(fractions[0] * n_steps))
    b2 = int(np.floor((fractions[0] + fractions[1]) * n_steps))
    return (0, b1), (b1, b2), (b2, n_steps)


def make_windows(n_steps, window, horizon, fractions=(0.6, 0.2, 0.2)):
    """Start indices per chronological split; stride 1, no boundary crossing."""
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    if n_steps < window + horizon:
        raise ValueError(
            f"series too short: {n_steps} steps cannot hold one {window}+{horizon} window"
        )
    spans = split_boundaries(n_steps, fractions)
    names = ("train", "val", "test")
    out = {}
    for name, (lo, hi) in zip(names, spans):
        out[name] = list(range(lo, hi - window - horizon + 1))
    return out


@dataclass
class ParkingDataset:
    """City, series, features and the chronological window index."""

    city: SyntheticCity
    series: SeriesData
    features: np.ndarray
    window: int
    horizon: int
    starts: dict = field(default_factory=dict)

    @classmethod
    def build(cls, city, series, window, horizon, fractions=(0.6, 0.2, 0.2)):
        starts = make_windows(series.pa.shape[0], window, horizon, fractions)
        return cls(
            city=city,
            series=series,
            features=build_features(city, series),
            window=window,
            horizon=horizon,
            starts=starts,
        )

    def n_windows(self, split):
        return len(self.starts[split])

    def sample(self, split, idx) -> WindowSample:
        s = self.starts[split][idx]
        t, tau = self.window, self.horizon
        return WindowSample(
            start=s,
            features=self.features[s : s + t],
            pa=self.series.pa[s : s + t],
            targets=self.series.pa[s + t : s + t + tau],
        )


# ---------------------------------------------------------------------------
# file formats

CITY_FILE = "city.csv"
SERIES_FILE = "series.csv"
MANIFEST_FILE = "manifest.txt"


def city_manifest_pairs(city: SyntheticCity, series: SeriesData):
    c, s = city.spec, series.spec
    return {
        "format": "sharegnn-dataset-v1",
        "prng": "philox4x64 via SeedSequence((seed, stream))",
        "city.n_lots": c.n_lots,
        "city.width_km": c.width_km,
        "city.height_km": c.height_km,
        "city.spacing_km": c.spacing_km,
        "city.cap_min": c.cap_min,
        "city.cap_max": c.cap_max,
        "city.labeled_frac": c.labeled_frac,
        "city.seed": c.seed,
        "series.n_steps": s.n_steps,
        "series.steps_per_day": s.steps_per_day,
        "series.zone_rho": s.zone_rho,
        "series.zone_std": s.zone_std,
        "series.diffusion": s.diffusion,
        "series.noise_std": s.noise_std,
        "series.eps_km": s.eps_km,
    }


def _f(x):
    return f"{float(x):.17g}"


def save_dataset(outdir, city: SyntheticCity, series: SeriesData, extra=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    with open(outdir / CITY_FILE, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(
            ["id", "x_km", "y_km", "capacity", "labeled", "district"]
            + [f"zone_{z}" for z in range(ZONE_COUNT)]
        )
        for lot in city.lots:
            wr.writerow(
                [lot.id, _f(lot.x_km), _f(lot.y_km), lot.capacity, int(lot.labeled),
                 int(city.districts[lot.id])]
                + [_f(v) for v in city.zone_mix[lot.id]]
            )

    with open(outdir / SERIES_FILE, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "lot_id", "pa", "population"])
        steps, n = series.pa.shape
        for t in range(steps):
            for i in range(n):
                wr.writerow([t, i, int(series.pa[t, i]), _f(series.population[t, i])])

    pairs = city_manifest_pairs(city, series)
    if extra:
        pairs.update(extra)
    write_kv(outdir / MANIFEST_FILE, pairs)


def load_dataset(indir):
    indir = Path(indir)
    for name in (CITY_FILE, SERIES_FILE, MANIFEST_FILE):
        if not (indir / name).exists():
            raise FileNotFoundError(f"missing {name} in {indir}")
    mf = read_kv(indir / MANIFEST_FILE)
    if mf.get("format") != "sharegnn-dataset-v1":
        raise ValueError(f"unrecognized dataset format: {mf.get('format')!r}")

    cspec = CitySpec(
        n_lots=int(mf["city.n_lots"]),
        width_km=float(mf["city.width_km"]),
        height_km=float(mf["city.height_km"]),
        spacing_km=float(mf["city.spacing_km"]),
        cap_min=int(mf["city.cap_min"]),
        cap_max=int(mf["city.cap_max"]),
        labeled_frac=float(mf["city.labeled_frac"]),
        seed=int(mf["city.seed"]),
    )
    sspec = SeriesSpec(
        n_steps=int(mf["series.n_steps"]),
        steps_per_day=int(mf["series.steps_per_day"]),
        zone_rho=float(mf["series.zone_rho"]),
        zone_std=float(mf["series.zone_std"]),
        diffusion=float(mf["series.diffusion"]),
        noise_std=float(mf["series.noise_std"]),
        eps_km=float(mf["series.eps_km"]),
    )

    lots, mix_rows, districts = [], [], []
    with open(indir / CITY_FILE, newline="") as fh:
        for row in csv.DictReader(fh):
            lots.append(
                ParkingLot(
                    id=int(row["id"]),
                    x_km=float(row["x_km"]),
                    y_km=float(row["y_km"]),
                    capacity=int(row["capacity"]),
                    labeled=bool(int(row["labeled"])),
                )
            )
            mix_rows.append([float(row[f"zone_{z}"]) for z in range(ZONE_COUNT)])
            districts.append(int(row["district"]))
    if len(lots) != cspec.n_lots:
        raise ValueError(f"city file has {len(lots)} lots, manifest says {cspec.n_lots}")
    net = RoadNetwork(0.0, 0.0, cspec.width_km, cspec.height_km, cspec.spacing_km)
    city = SyntheticCity(spec=cspec, lots=lots, net=net, zone_mix=np.array(mix_rows),
                         districts=np.array(districts, dtype=np.int64))

    pa = np.zeros((sspec.n_steps, cspec.n_lots), dtype=np.int64)
    population = np.zeros((sspec.n_steps, cspec.n_lots))
    with open(indir / SERIES_FILE, newline="") as fh:
        for row in csv.DictReader(fh):
            t, i = int(row["step"]), int(row["lot_id"])
            pa[t, i] = int(row["pa"])
            population[t, i] = float(row["population"])
    series = SeriesData(spec=sspec, pa=pa, population=population)
    return city, series
