"""Adversarial and single-network inverters mapping field vectors to profiles.

Seven variants share one training entry point. The four ``ANN*``/``CNN*``
tags train a generator against an unconditional discriminator; the three
baselines train one network on squared error.

Profiles travel through the networks as flat 1024-vectors in the tanh range;
``eps = eps_min + (t + 1) / 2 * (eps_max - eps_min)`` maps them back.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import _container
from .errors import ConfigError, DivergenceError, InvalidArgument, ParseError, StateError
from .metrics import nmse_rows
from .nn import AdamState, Network, adam_step, conv, dense, reshape, tconv
from .pipeline import FREQ_LATENT, TIME_LATENT
from .walls import PROFILE_SHAPE, PROFILE_X, PROFILE_Y, DielectricProfile

BUNDLE_MAGIC = "WPMB"
BUNDLE_VERSION = 1
LOG_CLAMP = 1e-7
EPS_MIN = 1.0
EPS_MAX = 8.0
N_PIXELS = PROFILE_SHAPE[0] * PROFILE_SHAPE[1]


@dataclass(frozen=True)
class GanVariant:
    tag: str
    domain: str  # "time" or "freq"
    adversarial: bool
    field_len: int
    latent_len: int

    @property
    def input_len(self):
        return self.field_len + self.latent_len


VARIANTS = {
    "ANNf": GanVariant("ANNf", "freq", True, 20, FREQ_LATENT),
    "ANNt": GanVariant("ANNt", "time", True, 520, TIME_LATENT),
    "CNNf": GanVariant("CNNf", "freq", True, 20, FREQ_LATENT),
    "CNNt": GanVariant("CNNt", "time", True, 520, TIME_LATENT),
    "FCNN_f": GanVariant("FCNN_f", "freq", False, 20, 0),
    "FCNN_t": GanVariant("FCNN_t", "time", False, 520, 0),
    "CNN_t": GanVariant("CNN_t", "time", False, 520, 0),
}

# command-line spellings
CLI_NAMES = {"gan-annf": "ANNf", "gan-annt": "ANNt", "gan-cnnf": "CNNf", "gan-cnnt": "CNNt",
             "fcnn-f": "FCNN_f", "fcnn-t": "FCNN_t", "cnn-t": "CNN_t"}


def get_variant(tag, field_len=None) -> GanVariant:
    """Look up a variant by tag or CLI name; ``field_len`` overrides the field vector length."""
    if isinstance(tag, GanVariant):
        v = tag
    else:
        key = CLI_NAMES.get(str(tag).lower(), tag)
        if key not in VARIANTS:
            raise InvalidArgument(f"unknown variant {tag!r}; choose from {sorted(VARIANTS)}")
        v = VARIANTS[key]
    if field_len is not None and int(field_len) != v.field_len:
        if int(field_len) < 1:
            raise InvalidArgument("field_len must be >= 1")
        v = replace(v, field_len=int(field_len))
    return v


def cli_name(variant):
    tag = get_variant(variant).tag
    return next(k for k, t in CLI_NAMES.items() if t == tag)


# --- architectures ---------------------------------------------------------

def _ann_generator(hidden, dropout):
    layers = [dense(h, "leaky_relu", dropout) for h in hidden]
    return layers + [dense(N_PIXELS, "tanh")]


def _cnn_generator(start, ladder, dropout):
    side, ch = start
    if start[0] is None:  # derive the seed map size from the stride ladder
        side = PROFILE_SHAPE[0]
        for _, _, st in ladder:
            if side % st:
                raise InvalidArgument(f"stride ladder {ladder} does not divide {PROFILE_SHAPE[0]}")
            side //= st
    layers = [dense(side * side * ch, "leaky_relu", dropout), reshape(side, side, ch)]
    for filters, k, s in ladder:
        layers.append(tconv(filters, k, s, "leaky_relu", dropout))
    layers += [conv(1, 3, 1, "tanh"), reshape(N_PIXELS)]
    return layers


def _ann_discriminator(dropout, hidden=(512, 256)):
    return [dense(h, "leaky_relu", dropout) for h in hidden] + [dense(1, "sigmoid")]


def _cnn_discriminator(dropout):
    side = PROFILE_SHAPE[0] // 4
    return [reshape(PROFILE_SHAPE[0], PROFILE_SHAPE[1], 1),
            conv(128, 3, 2, "leaky_relu", dropout),
            conv(128, 3, 2, "leaky_relu", dropout),
            reshape(side * side * 128), dense(1, "sigmoid")]


DEFAULT_ARCH = {
    "ANNf": {"g_hidden": (256, 512), "d_hidden": (512, 256)},
    "ANNt": {"g_hidden": (512, 768), "d_hidden": (512, 256)},
    "CNNf": {"g_ladder": ((128, 4, 2), (128, 4, 2)), "g_channels": 128},
    "CNNt": {"g_ladder": ((128, 5, 1), (128, 3, 2)), "g_channels": 128},
}
DEFAULT_ARCH["FCNN_f"] = DEFAULT_ARCH["ANNf"]
DEFAULT_ARCH["FCNN_t"] = DEFAULT_ARCH["ANNt"]
DEFAULT_ARCH["CNN_t"] = DEFAULT_ARCH["CNNt"]


def layer_plan(variant, dropout=0.2, arch=None):
    """(generator layers, discriminator layers or None) for ``variant``.

    ``arch`` overrides ``g_hidden``/``d_hidden`` for dense variants and
    ``g_ladder`` (filters, kernel, stride triples) for convolutional ones.
    """
    v = get_variant(variant)
    a = dict(DEFAULT_ARCH[v.tag])
    a.update(arch or {})
    if "g_hidden" in a:
        g = _ann_generator(tuple(a["g_hidden"]), dropout)
    else:
        ladder = [tuple(t) for t in a["g_ladder"]]
        g = _cnn_generator((None, a.get("g_channels", 128)), ladder, dropout)
    if not v.adversarial:
        return g, None
    if v.tag.startswith("CNN"):
        d = _cnn_discriminator(dropout)
    else:
        d = _ann_discriminator(dropout, tuple(a.get("d_hidden", (512, 256))))
    return g, d


def build_networks(variant, dropout=0.2, seed=0, dtype="float64", arch=None):
    """Freshly initialised (generator, discriminator); the latter is None for baselines."""
    v = get_variant(variant)
    g_layers, d_layers = layer_plan(v, dropout, arch)
    gen = Network(g_layers, (v.input_len,), seed=seed, dtype=dtype)
    disc = None
    if d_layers is not None:
        disc = Network(d_layers, (N_PIXELS,), seed=seed + 1, dtype=dtype)
    return gen, disc


# --- losses ----------------------------------------------------------------

def _clamp(p):
    return np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)


def d_loss(p_real, p_fake):
    """Negative of the discriminator's objective, batch mean, clamped logs."""
    return float(-np.mean(np.log(_clamp(p_real))) - np.mean(np.log(1.0 - _clamp(p_fake))))


def _d_loss_grads(p_real, p_fake):
    inside_r = (p_real > LOG_CLAMP) & (p_real < 1.0 - LOG_CLAMP)
    inside_f = (p_fake > LOG_CLAMP) & (p_fake < 1.0 - LOG_CLAMP)
    g_real = np.where(inside_r, -1.0 / _clamp(p_real), 0.0) / len(p_real)
    g_fake = np.where(inside_f, 1.0 / (1.0 - _clamp(p_fake)), 0.0) / len(p_fake)
    return g_real, g_fake


def g_adv_loss(p_fake, form="nonsat"):
    if form == "nonsat":
        return float(-np.mean(np.log(_clamp(p_fake))))
    return float(np.mean(np.log(1.0 - _clamp(p_fake))))


def _g_adv_grad(p_fake, form):
    inside = (p_fake > LOG_CLAMP) & (p_fake < 1.0 - LOG_CLAMP)
    if form == "nonsat":
        g = -1.0 / _clamp(p_fake)
    else:
        g = -1.0 / (1.0 - _clamp(p_fake))
    return np.where(inside, g, 0.0) / len(p_fake)


# --- configuration, logs, bundles ------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 1000
    batch: int = 16
    lr: float = 2e-4
    dropout: float = 0.2
    seed: int = 0  # weight init and batch order
    latent_seed: int = 1  # training latent draws
    dropout_seed: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    g_loss: str = "nonsat"  # or "minimax"
    rec_weight: float = 10.0  # squared-error term added to the generator loss; 0 disables
    dtype: str = "float32"
    eps_max: float = EPS_MAX
    val_latent_seed: int = 0
    early_stop: int = 0  # patience in epochs on validation NMSE; 0 runs every epoch

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ConfigError("epochs and batch must be >= 1")
        if self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.g_loss not in ("nonsat", "minimax"):
            raise ConfigError(f"g_loss must be 'nonsat' or 'minimax', got {self.g_loss!r}")
        if self.rec_weight < 0:
            raise ConfigError("rec_weight must be >= 0")
        if self.eps_max <= EPS_MIN:
            raise ConfigError("eps_max must exceed 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @classmethod
    def from_items(cls, items):
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, value in items:
            if key not in kinds:
                continue
            kind = kinds[key]
            kw[key] = value if kind == "str" else (int(value) if kind == "int" else float(value))
        return cls(**kw)


@dataclass
class TrainLog:
    epoch: list = field(default_factory=list)
    d_loss: list = field(default_factory=list)
    g_loss: list = field(default_factory=list)
    val_nmse: list = field(default_factory=list)
    seconds: float | None = None

    def append(self, epoch, d, g, v):
        self.epoch.append(epoch)
        self.d_loss.append(d)
        self.g_loss.append(g)
        self.val_nmse.append(v)

    def __len__(self):
        return len(self.epoch)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "d_loss", "g_loss", "val_nmse"])
            for row in zip(self.epoch, self.d_loss, self.g_loss, self.val_nmse):
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
            if self.seconds is not None:
                fh.write(f"# seconds={self.seconds!r}\n")

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["epoch", "d_loss", "g_loss", "val_nmse"]:
            raise ParseError("training log header missing", line=1)
        for i, row in enumerate(rows[1:], start=2):
            if row and row[0].startswith("#"):
                key, _, val = row[0][1:].strip().partition("=")
                if key == "seconds":
                    try:
                        log.seconds = float(val)
                    except ValueError:
                        raise ParseError("bad seconds note in training log", line=i) from None
                continue
            try:
                log.append(int(row[0]), *(float(x) for x in row[1:4]))
            except (ValueError, IndexError):
                raise ParseError(f"bad training log row {row!r}", line=i) from None
        return log


@dataclass
class ModelBundle:
    variant: GanVariant
    generator: Network
    discriminator: Network | None
    input_scale: float
    config: TrainConfig
    eps_min: float = EPS_MIN
    eps_max: float = EPS_MAX

    def encode_target(self, eps):
        return encode_target(eps, self.eps_min, self.eps_max)

    def decode_output(self, t):
        return decode_output(t, self.eps_min, self.eps_max)

    def save(self, path):
        header = [("variant", self.variant.tag), ("field_len", self.variant.field_len),
                  ("input_scale", repr(float(self.input_scale))),
                  ("eps_min", repr(float(self.eps_min))), ("eps_max", repr(float(self.eps_max)))]
        header += [(f"config.{k}", v if isinstance(v, str) else repr(v)) for k, v in asdict(self.config).items()]
        h, arrays = self.generator.to_parts("g")
        header += h
        if self.discriminator is not None:
            h, a = self.discriminator.to_parts("d")
            header += h
            arrays = arrays + a
        _container.write(path, BUNDLE_MAGIC, BUNDLE_VERSION, header, arrays)

    @classmethod
    def load(cls, path):
        header, arrays = _container.read(path, BUNDLE_MAGIC, BUNDLE_VERSION)
        meta = _container.header_dict(header, ("variant", "input_scale", "eps_min", "eps_max"))
        try:
            variant = get_variant(meta["variant"], int(meta.get("field_len", 0)) or None)
            cfg = TrainConfig.from_items((k[7:], v) for k, v in header if k.startswith("config."))
            scale = float(meta["input_scale"])
            lo, hi = float(meta["eps_min"]), float(meta["eps_max"])
        except (InvalidArgument, ConfigError, ValueError) as exc:
            raise ParseError(f"bad model bundle header: {exc}") from None
        gen = Network.from_parts(header, arrays, "g")
        disc = Network.from_parts(header, arrays, "d") if any(k == "d.layer" for k, _ in header) else None
        if gen.input_shape != (variant.input_len,):
            raise ParseError(f"generator input {gen.input_shape} does not fit variant {variant.tag}")
        return cls(variant, gen, disc, scale, cfg, lo, hi)

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return (a.specs == b.specs and a.input_shape == b.input_shape and a.dtype_name == b.dtype_name
                    and all(np.array_equal(p, q) for ga, gb in zip(a.params, b.params) for p, q in zip(ga, gb)))

        return (self.variant == other.variant and self.input_scale == other.input_scale
                and self.config == other.config and self.eps_min == other.eps_min
                and self.eps_max == other.eps_max and same(self.generator, other.generator)
                and same(self.discriminator, other.discriminator))


def encode_target(eps, eps_min=EPS_MIN, eps_max=EPS_MAX):
    return 2.0 * (np.asarray(eps, dtype=float) - eps_min) / (eps_max - eps_min) - 1.0


def decode_output(t, eps_min=EPS_MIN, eps_max=EPS_MAX):
    eps = eps_min + (np.asarray(t, dtype=float) + 1.0) * 0.5 * (eps_max - eps_min)
    return np.clip(eps, eps_min, eps_max)


# --- training --------------------------------------------------------------

def _stack(samples, variant):
    if not samples:
        raise InvalidArgument("training set is empty")
    lens = {len(np.ravel(s.input)) for s in samples}
    if len(lens) > 1:
        raise InvalidArgument(f"mixed input types in one set (lengths {sorted(lens)})")
    (n,) = lens
    if n != variant.field_len:
        raise InvalidArgument(f"variant {variant.tag} takes {variant.field_len}-length field vectors, got {n}")
    X = np.stack([np.ravel(s.input) for s in samples]).astype(float)
    Y = np.stack([np.ravel(getattr(s.target, "values", s.target)) for s in samples]).astype(float)
    return X, Y


class _Trainer:
    """Holds networks, optimiser states and random streams for one run."""

    def __init__(self, variant, config, input_scale, arch=None):
        self.v = variant
        self.cfg = config
        self.scale = input_scale
        self.gen, self.disc = build_networks(variant, config.dropout, config.seed, config.dtype, arch)
        self.g_opt = AdamState(config.lr, config.beta1, config.beta2)
        self.d_opt = AdamState(config.lr, config.beta1, config.beta2)
        self.order_rng = np.random.default_rng(config.seed)
        self.latent_rng = np.random.default_rng(config.latent_seed)
        self.drop_rng = np.random.default_rng(config.dropout_seed)

    def gen_input(self, fields, latent=None):
        f = np.asarray(fields, dtype=float) / self.scale
        if not self.v.latent_len:
            return f
        if latent is None:
            latent = self.latent_rng.standard_normal((len(f), self.v.latent_len))
        return np.concatenate([latent, f], axis=1)

    def d_step(self, real, fake):
        pr, cr = self.disc.forward(real, train=True, rng=self.drop_rng)
        pf, cf = self.disc.forward(fake, train=True, rng=self.drop_rng)
        loss = d_loss(pr, pf)
        gr, gf = _d_loss_grads(pr, pf)
        grads_r, _ = self.disc.backward(cr, gr, input_grad=False)
        grads_f, _ = self.disc.backward(cf, gf, input_grad=False)
        grads = [[a + b for a, b in zip(x, y)] for x, y in zip(grads_r, grads_f)]
        adam_step(self.disc.params, grads, self.d_opt)
        self.disc.touch()
        return loss, pr, pf

    def g_step(self, fake, gcache, real):
        B = len(fake)
        dfake = np.zeros_like(fake)
        loss = 0.0
        if self.disc is not None:
            pf, cf = self.disc.forward(fake, train=True, rng=self.drop_rng)
            loss += g_adv_loss(pf, self.cfg.g_loss)
            _, dfake = self.disc.backward(cf, _g_adv_grad(pf, self.cfg.g_loss))
            w = self.cfg.rec_weight
        else:
            w = 1.0
        if w:
            diff = fake - real
            loss += w * float(np.mean(diff * diff))
            dfake = dfake + (2.0 * w / diff.size) * diff
        grads, _ = self.gen.backward(gcache, dfake.astype(self.gen.dtype), input_grad=False)
        adam_step(self.gen.params, grads, self.g_opt)
        self.gen.touch()
        return loss

    def batch(self, xb, yb):
        zin = self.gen_input(xb)
        fake, gcache = self.gen.forward(zin, train=True, rng=self.drop_rng)
        d = 0.0
        if self.disc is not None:
            d, _, _ = self.d_step(yb, fake)
        g = self.g_step(fake, gcache, yb)
        return d, g

    def bundle(self):
        return ModelBundle(self.v, self.gen, self.disc, self.scale, self.cfg, EPS_MIN, self.cfg.eps_max)


def train_arrays(variant, X, Y, X_val=None, Y_val=None, config: TrainConfig | None = None, progress=None,
                 arch=None):
    """Train on field vectors ``X`` (n, field_len) and profiles ``Y`` (n, 32, 32) in eps units.

    The variant's field length follows ``X`` when it differs (receiver subsets).
    """
    X = np.asarray(X, dtype=float)
    v = get_variant(variant, X.shape[1] if X.ndim == 2 else None)
    cfg = config or TrainConfig()
    Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
    if X.ndim != 2 or X.shape[1] != v.field_len:
        raise InvalidArgument(f"variant {v.tag} takes (n, {v.field_len}) inputs, got {X.shape}")
    if len(X) != len(Y) or len(X) == 0:
        raise InvalidArgument("inputs and targets must be nonempty and equally long")
    if Y.shape[1] != N_PIXELS:
        raise InvalidArgument(f"targets must hold {N_PIXELS} pixels, got {Y.shape[1]}")
    scale = float(np.max(np.abs(X)))
    if not np.isfinite(scale):
        raise InvalidArgument("training inputs contain non-finite values")
    scale = scale if scale > 0 else 1.0
    tr = _Trainer(v, cfg, scale, arch)
    T = encode_target(Y, EPS_MIN, cfg.eps_max)
    log = TrainLog()
    best, stale = np.inf, 0
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = tr.order_rng.permutation(len(X))
        d_tot = g_tot = 0.0
        n_b = 0
        for b, lo in enumerate(range(0, len(X), cfg.batch)):
            idx = order[lo:lo + cfg.batch]
            d, g = tr.batch(X[idx], T[idx])
            if not (np.isfinite(d) and np.isfinite(g)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}", step=(epoch, b))
            d_tot += d
            g_tot += g
            n_b += 1
        val = np.nan
        if X_val is not None and len(X_val):
            pred = predict_arrays(tr.bundle(), X_val, cfg.val_latent_seed)
            val = float(np.mean(nmse_rows(np.asarray(Y_val).reshape(len(Y_val), -1), pred.reshape(len(pred), -1))))
        log.append(epoch, d_tot / n_b, g_tot / n_b, val)
        if progress is not None:
            progress(epoch, log)
        if cfg.early_stop and np.isfinite(val):
            if val < best - 1e-12:
                best, stale = val, 0
            else:
                stale += 1
                if stale >= cfg.early_stop:
                    break
    log.seconds = time.perf_counter() - start
    return tr.bundle(), log


def train(variant, train_set, val_set=None, config: TrainConfig | None = None, progress=None, arch=None):
    """Train from lists of ``TrainingSample``; returns (ModelBundle, TrainLog)."""
    v = get_variant(variant)
    X, Y = _stack(train_set, v)
    Xv = Yv = None
    if val_set:
        Xv, Yv = _stack(val_set, v)
    return train_arrays(v, X, Y, Xv, Yv, config, progress, arch)


# --- inference -------------------------------------------------------------

def _latents(variant, n, latent_seed, average):
    if not variant.latent_len:
        return [None]
    rng = np.random.default_rng(latent_seed)
    draws = []
    for _ in range(max(1, int(average))):
        z = rng.standard_normal(variant.latent_len)
        draws.append(np.broadcast_to(z, (n, variant.latent_len)))
    return draws


def predict_arrays(bundle: ModelBundle, X, latent_seed=0, average=1, batch_size=64):
    """Profiles in eps units, shape (n, 32, 32).

    Every row uses the same latent vector drawn from ``latent_seed`` so a
    row's output does not depend on its batch neighbours. ``average > 1``
    returns the mean over that many latent draws.
    """
    if bundle is None or bundle.generator is None:
        raise StateError("model bundle is not trained")
    v = bundle.variant
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2 or X.shape[1] != v.field_len:
        raise InvalidArgument(f"variant {v.tag} takes {v.field_len}-length field vectors, got shape {X.shape}")
    f = X / bundle.input_scale
    acc = np.zeros((len(X), N_PIXELS))
    draws = _latents(v, len(X), latent_seed, average)
    for z in draws:
        inp = f if z is None else np.concatenate([z, f], axis=1)
        acc += bundle.generator.predict(inp, batch_size)
    out = bundle.decode_output(acc / len(draws))
    return out.reshape((len(X),) + PROFILE_SHAPE)


def infer(bundle: ModelBundle, field_input, latent_seed=0, average=1) -> DielectricProfile:
    vec = np.ravel(np.asarray(field_input, dtype=float))
    if vec.size != bundle.variant.field_len:
        raise InvalidArgument(f"variant {bundle.variant.tag} takes {bundle.variant.field_len}-length "
                              f"field vectors, got {vec.size}")
    vals = predict_arrays(bundle, vec[None], latent_seed, average)[0]
    return DielectricProfile(vals, PROFILE_X, PROFILE_Y)


def infer_batch(bundle: ModelBundle, inputs, latent_seed=0, average=1):
    """Returns (list of profiles, elapsed seconds)."""
    t0 = time.perf_counter()
    vals = predict_arrays(bundle, inputs, latent_seed, average)
    dt = time.perf_counter() - t0
    return [DielectricProfile(v, PROFILE_X, PROFILE_Y) for v in vals], dt


# --- estimator -------------------------------------------------------------

class NeuralInverter(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit(X, y)`` with field vectors and profiles.

    ``predict`` returns flattened eps profiles of shape (n, 1024).
    """

    def __init__(self, variant="CNNt", epochs=1000, batch=16, lr=2e-4, dropout=0.2, seed=0,
                 rec_weight=10.0, g_loss="nonsat", dtype="float32", eps_max=EPS_MAX, latent_seed=0):
        self.variant = variant
        self.epochs = epochs
        self.batch = batch
        self.lr = lr
        self.dropout = dropout
        self.seed = seed
        self.rec_weight = rec_weight
        self.g_loss = g_loss
        self.dtype = dtype
        self.eps_max = eps_max
        self.latent_seed = latent_seed

    def _config(self):
        return TrainConfig(epochs=self.epochs, batch=self.batch, lr=self.lr, dropout=self.dropout,
                           seed=self.seed, latent_seed=self.seed + 1, dropout_seed=self.seed + 2,
                           rec_weight=self.rec_weight, g_loss=self.g_loss, dtype=self.dtype,
                           eps_max=self.eps_max)

    def fit(self, X, y, X_val=None, y_val=None):
        from .validation import check_field_matrix, check_profiles

        v = get_variant(self.variant)
        X = check_field_matrix(X, v.field_len)
        y = check_profiles(y, len(X))
        self.bundle_, self.log_ = train_arrays(v, X, y, X_val, y_val, self._config())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        from .validation import check_field_matrix, check_fitted

        check_fitted(self, "bundle_")
        X = check_field_matrix(X, self.bundle_.variant.field_len)
        return predict_arrays(self.bundle_, X, self.latent_seed).reshape(len(X), -1)

    def score(self, X, y, sample_weight=None):
        """Negative mean NMSE, so larger is better as sklearn expects."""
        pred = self.predict(X)
        return -float(np.mean(nmse_rows(np.asarray(y).reshape(len(pred), -1), pred)))

    @classmethod
    def from_bundle(cls, bundle: ModelBundle):
        c = bundle.config
        est = cls(variant=bundle.variant.tag, epochs=c.epochs, batch=c.batch, lr=c.lr, dropout=c.dropout,
                  seed=c.seed, rec_weight=c.rec_weight, g_loss=c.g_loss, dtype=c.dtype, eps_max=bundle.eps_max)
        est.bundle_ = bundle
        est.n_features_in_ = bundle.variant.field_len
        return est


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
