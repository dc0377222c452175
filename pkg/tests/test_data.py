import numpy as np
import pytest

from pss.data import (
    Dataset,
    NewsSample,
    datasets_equal,
    load_dataset,
    save_dataset,
    split_dataset,
    validate_dataset,
)
from pss.errors import DataValidationError


def make_sample(sid="n0", label=0, d=3, n_nodes=3, edges=None, engagements=None):
    feats = np.arange(n_nodes * d, dtype=np.float64).reshape(n_nodes, d) / 7.0
    return NewsSample(
        id=sid,
        label=label,
        news_feature=feats[0].copy(),
        node_features=feats,
        edges=edges if edges is not None else [(0, i) for i in range(1, n_nodes)],
        engagements=engagements if engagements is not None else [("u1", 2)],
    )


def make_dataset(n=12, d=3):
    samples = [make_sample(f"n{i:03d}", i % 2, d) for i in range(n)]
    return Dataset.from_samples(d, samples)


def test_validate_clean_dataset():
    assert validate_dataset(make_dataset()) == []


def test_validate_reports_root_mismatch():
    s = make_sample()
    s.news_feature = s.news_feature + 1.0
    ds = Dataset.from_samples(3, [s])
    assert any("node_features[0]" in r for r in validate_dataset(ds))


def test_validate_reports_cycle():
    s = make_sample(edges=[(1, 2), (2, 1)])
    report = validate_dataset(Dataset.from_samples(3, [s]))
    assert any("forest violated" in r and "n0" in r for r in report)


def test_validate_reports_bad_count_and_label():
    s = make_sample(label=2, engagements=[("u1", 0)])
    report = validate_dataset(Dataset.from_samples(3, [s]))
    assert any("count >= 1" in r for r in report)
    assert any("label domain" in r for r in report)


def test_validate_reports_dangling_edge_and_two_parents():
    report = validate_dataset(Dataset.from_samples(3, [make_sample(edges=[(0, 7)])]))
    assert any("invalid node index" in r for r in report)
    report = validate_dataset(
        Dataset.from_samples(3, [make_sample(edges=[(0, 2), (1, 2)])])
    )
    assert any("two parents" in r for r in report)


def test_round_trip_is_bit_exact(tmp_path):
    ds = make_dataset()
    # awkward but valid float values must survive exactly
    ds.samples[0].node_features[1, 0] = 0.1
    ds.samples[0].node_features[1, 1] = 1.0 / 3.0
    ds.samples[0].node_features[1, 2] = 1e-300
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert datasets_equal(ds, loaded)


def test_two_saves_byte_identical(tmp_path):
    ds = make_dataset()
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(ds, p1)
    save_dataset(ds, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_dataset_header_only(tmp_path):
    path = tmp_path / "empty.jsonl"
    save_dataset(Dataset.from_samples(4, []), path)
    lines = path.read_text().splitlines()
    assert lines == ['{"format":"pssd-v1","feature_dim":4}']
    assert len(load_dataset(path).samples) == 0


def test_load_rejects_bad_json_with_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format":"pssd-v1","feature_dim":3}\n{oops\n')
    with pytest.raises(DataValidationError, match=":2"):
        load_dataset(path)


def test_load_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format":"other","feature_dim":3}\n')
    with pytest.raises(DataValidationError, match="header"):
        load_dataset(path)


def test_load_rejects_extra_keys(tmp_path):
    ds = make_dataset(n=1)
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    lines[1] = lines[1][:-1] + ',"extra":1}'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataValidationError, match="extra"):
        load_dataset(path)


def test_load_rejects_dimension_mismatch(tmp_path):
    path = tmp_path / "ds.jsonl"
    path.write_text(
        '{"format":"pssd-v1","feature_dim":3}\n'
        '{"id":"n0","label":0,"news_feature":[1.0,2.0],'
        '"node_features":[[1.0,2.0]],"edges":[],"engagements":[]}\n'
    )
    with pytest.raises(DataValidationError, match="n0"):
        load_dataset(path)


def test_split_sizes_314():
    split = split_dataset(make_dataset(314), seed=5)
    assert (len(split.train), len(split.val), len(split.test)) == (219, 31, 64)


def test_split_sizes_10():
    split = split_dataset(make_dataset(10), seed=5)
    assert (len(split.train), len(split.val), len(split.test)) == (7, 1, 2)


def test_split_partition_and_determinism():
    ds = make_dataset(53)
    a = split_dataset(ds, seed=3)
    b = split_dataset(ds, seed=3)
    assert (a.train, a.val, a.test) == (b.train, b.val, b.test)
    everything = sorted(a.train + a.val + a.test)
    assert everything == list(range(53))
    c = split_dataset(ds, seed=4)
    assert (len(c.train), len(c.val), len(c.test)) == (len(a.train), len(a.val), len(a.test))
    assert c.train != a.train


def test_split_too_small():
    with pytest.raises(ValueError, match="at least 10"):
        split_dataset(make_dataset(9), seed=1)


def test_user_index_covers_exactly_engaged_users():
    ds = make_dataset()
    assert set(ds.user_index) == {"u1"}
    ds.user_index["ghost"] = 5
    assert any("user_index" in r for r in validate_dataset(ds))
