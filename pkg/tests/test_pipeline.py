import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallprobe import _container
from wallprobe.errors import ConfigError, InvalidArgument, ParseError, UnsupportedVersion
from wallprobe.fdtd import F0, FieldRecord
from wallprobe.pipeline import (DOWNSAMPLE_KEEP, CalibratedRecord, Dataset, FreqFeatures, TimeFeatures,
                                calibrate, downsample, extract_phasor, freq_subset, generate_dataset,
                                make_latent, phasors, read_case, select_limit, split_dataset, time_subset,
                                write_case)
from wallprobe.walls import enumerate_dataset


def test_calibrate_subtracts():
    a = FieldRecord(np.arange(6.0).reshape(2, 3), 1e-11, 1e-11)
    b = FieldRecord(np.ones((2, 3)), 1e-11, 1e-11)
    rec = calibrate(a, b)
    assert np.array_equal(rec.scattered, np.arange(6.0).reshape(2, 3) - 1)
    with pytest.raises(InvalidArgument):
        calibrate(a, FieldRecord(np.ones((2, 4)), 1e-11, 1e-11))
    with pytest.raises(InvalidArgument):
        calibrate(a, FieldRecord(np.ones((2, 3)), 2e-11, 1e-11))


def test_downsample_layout():
    sc = np.arange(10 * 1075, dtype=float).reshape(10, 1075)
    v = downsample(CalibratedRecord(sc, 2e-11, 2e-11))
    assert v.shape == (520,)
    assert np.array_equal(v.reshape(10, 52), sc[:, 0:1040:20])
    with pytest.raises(InvalidArgument):
        downsample(CalibratedRecord(sc[:, :1000], 2e-11, 2e-11))


@given(st.floats(0.01, 100.0), st.floats(-np.pi, np.pi))
def test_phasor_recovers_sinusoid(amp, phi):
    t = 2e-11 * np.arange(1, 1076)
    x = amp * np.cos(2 * np.pi * F0 * t + phi)
    p = phasors(x, t)[0]
    assert np.isclose(p, amp * np.exp(1j * phi), rtol=1e-9, atol=1e-9 * amp)


def test_phasor_ignores_early_transient():
    t = 2e-11 * np.arange(1, 1076)
    x = np.cos(2 * np.pi * F0 * t)
    x[:500] += 50.0 * np.exp(-t[:500] / 1e-9)
    assert np.isclose(phasors(x, t)[0], 1.0, atol=1e-9)


def test_phasor_needs_long_record():
    t = 2e-11 * np.arange(1, 50)
    with pytest.raises(InvalidArgument):
        phasors(np.zeros(49), t)


def test_extract_phasor_layout():
    t = 2e-11 * np.arange(1, 1076)
    amps = np.arange(1, 11)[:, None]
    sc = amps * np.sin(2 * np.pi * F0 * t)[None, :]
    v = extract_phasor(CalibratedRecord(sc, 2e-11, 2e-11))
    assert v.shape == (20,)
    # sin = cos(wt - pi/2) -> phasor -i*amp
    assert np.allclose(v[:10], 0, atol=1e-9) and np.allclose(v[10:], -np.arange(1, 11), atol=1e-9)


def test_subsets():
    vec = np.arange(520.0)
    sub = time_subset(vec, [0, 9], 10)
    assert np.array_equal(sub, np.concatenate([np.arange(52.0), np.arange(468.0, 520.0)]))
    f = np.arange(20.0)
    assert np.array_equal(freq_subset(f, [1, 3], 10), [1, 3, 11, 13])


def test_latent_deterministic():
    assert np.array_equal(make_latent(100, 3), make_latent(100, 3))
    assert not np.array_equal(make_latent(100, 3), make_latent(100, 4))


def test_split_sizes_and_strata():
    specs = enumerate_dataset()
    train, val = split_dataset(specs, 0.9, seed=0)
    assert len(train) == 802 and len(val) == 90
    kinds = [s.kind for s in val]
    # largest-remainder apportioning of 90 over 130/225/225/312
    assert sorted(kinds.count(k) for k in ("homo", "ylayer", "xlayer", "airgap")) == [13, 23, 23, 31]
    again = split_dataset(specs, 0.9, seed=0)
    assert [s.to_line() for s in again[1]] == [s.to_line() for s in val]
    other = split_dataset(specs, 0.9, seed=1)
    assert [s.to_line() for s in other[1]] != [s.to_line() for s in val]


@given(st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 5))
def test_split_partitions(n, frac, seed):
    items = list(range(n))
    train, val = split_dataset(items, frac, seed, key=lambda i: i % 3)
    assert sorted(train + val) == items
    assert len(train) == int(np.floor(n * frac + 1e-9))


def test_split_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        split_dataset([], 0.9)
    with pytest.raises(InvalidArgument):
        split_dataset([1, 2], 1.0)


def test_select_limit():
    items = list(range(100))
    assert select_limit(items, None) == items
    sub = select_limit(items, 5)
    assert sub[0] == 0 and sub[-1] == 99 and len(sub) == 5
    with pytest.raises(ConfigError):
        select_limit(items, 0)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ConfigError):
        generate_dataset(str(tmp_path), kinds=("brick",))


def test_tiny_dataset_layout(tiny_dataset):
    ds = tiny_dataset
    assert len(ds.ids()) == 8
    c = ds.cases()[0]
    assert c.time_input.shape == (10 * DOWNSAMPLE_KEEP,)
    assert c.freq_input.shape == (20,)
    assert c.target.shape == (32, 32)
    assert c.record.scattered.shape == (10, 1075)
    assert c.sample("time").input is c.time_input
    with pytest.raises(InvalidArgument):
        c.sample("space")


def test_case_round_trip(tiny_dataset, tmp_path):
    c = tiny_dataset.cases()[0]
    p = str(tmp_path / "c.wpb")
    write_case(p, c)
    back = read_case(p)
    assert back == c
    with open(p, "rb") as fh:
        raw = fh.read()
    write_case(str(tmp_path / "d.wpb"), back)
    with open(tmp_path / "d.wpb", "rb") as fh:
        assert fh.read() == raw


def test_case_truncation_always_parse_error(tiny_dataset, tmp_path):
    c = tiny_dataset.cases()[1]
    p = str(tmp_path / "c.wpb")
    write_case(p, c)
    with open(p, "rb") as fh:
        raw = fh.read()
    cuts = sorted(set(range(0, 400)) | set(np.linspace(0, len(raw) - 1, 200).astype(int)))
    for n in cuts:
        with pytest.raises(ParseError):
            _container.loads(raw[:n], "WPB1", 1)
        with open(p, "wb") as fh:
            fh.write(raw[:n])
        with pytest.raises(ParseError):
            read_case(p)


def test_container_version_and_magic():
    raw = _container.dumps("WPB1", 1, [("k", "v")], [("a", np.arange(3.0))])
    with pytest.raises(UnsupportedVersion):
        _container.loads(raw.replace(b"WPB1 1", b"WPB1 7", 1), "WPB1", 1)
    with pytest.raises(ParseError):
        _container.loads(raw.replace(b"WPB1", b"XXXX", 1), "WPB1", 1)
    with pytest.raises(ParseError):
        _container.loads(raw + b"\0", "WPB1", 1)


@settings(max_examples=30)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=0, max_size=30),
       st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters="\n\r"), max_size=20))
def test_container_round_trip(values, text):
    arr = np.array(values, dtype=np.float64)
    cplx = arr + 1j * arr[::-1] if arr.size else np.zeros(0, complex)
    raw = _container.dumps("TST", 2, [("note", text)], [("a", arr), ("c", cplx)])
    header, arrays = _container.loads(raw, "TST", 2)
    assert header == [("note", text)]
    assert arrays["a"].tobytes() == arr.tobytes()
    assert arrays["c"].tobytes() == cplx.astype(np.complex128).tobytes()


def test_manifest_reproducible(tiny_dataset, tmp_path):
    root = str(tmp_path / "again")
    generate_dataset(root, limit=8)
    for name in ("manifest.csv", "config.json"):
        with open(os.path.join(tiny_dataset.root, name), "rb") as a, open(os.path.join(root, name), "rb") as b:
            assert a.read() == b.read()
    for cid in tiny_dataset.ids():
        kind = cid.split("-")[0]
        with open(os.path.join(tiny_dataset.root, kind, cid + ".wpb"), "rb") as a, \
                open(os.path.join(root, kind, cid + ".wpb"), "rb") as b:
            assert a.read() == b.read()


def test_resume_keeps_existing(tiny_dataset, tmp_path):
    import shutil

    root = str(tmp_path / "copy")
    shutil.copytree(tiny_dataset.root, root)
    victim = os.path.join(root, tiny_dataset.ids()[0].split("-")[0], tiny_dataset.ids()[0] + ".wpb")
    with open(victim, "r+b") as fh:
        fh.truncate(100)
    calls = []
    generate_dataset(root, limit=8, resume=True, progress=lambda d, n: calls.append(n))
    assert calls == [1]
    assert read_case(victim) == tiny_dataset.case(tiny_dataset.ids()[0])


def test_manifest_errors(tmp_path):
    with pytest.raises(ParseError):
        Dataset(str(tmp_path))
    (tmp_path / "manifest.csv").write_text("id,type\n")
    with pytest.raises(ParseError):
        Dataset(str(tmp_path))
    (tmp_path / "manifest.csv").write_text("id,type,spec,split\nx,homo,homo,test\n")
    with pytest.raises(ParseError) as exc:
        Dataset(str(tmp_path))
    assert exc.value.line == 2


def test_feature_transformers(tiny_dataset):
    cases = tiny_dataset.cases()[:3]
    X = np.stack([c.record.scattered for c in cases])
    T = TimeFeatures().fit(X).transform(X)
    F = FreqFeatures().fit_transform(X)
    assert np.array_equal(T, np.stack([c.time_input for c in cases]))
    assert np.allclose(F, np.stack([c.freq_input for c in cases]), rtol=0, atol=1e-12 * np.abs(F).max())
