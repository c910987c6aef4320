"""
Tests for CSV ingestion, cleaning, encoding, standardization, splitting and bundles.
"""
import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from .data_pipeline import (
    CATEGORICAL, NUMERIC, LabelCodec, LabeledDataset, RawTable, SplitSpec, StandardizationStats,
    clean, encode_labels_and_categoricals, load_bundle, load_csv, prepare_dataset,
    save_bundle, select_features, standardize_apply, standardize_fit, stratified_split,
    stratified_subsample,
)
from .errors import (
    BundleError, ColumnError, ConfigError, DimensionError, InputError, LabelError, RaggedRowError,
)
from .tensor import SeededRng

FIXTURE_DROP = ("frame.time", "ip.src_host", "Attack_label")


def write_csv(path, text: str):
    path.write_text(text)
    return path


def flows_frame(n: int = 40, seed: int = 0) -> pd.DataFrame:
    """Small Edge-IIoT-like table: two classes, a numeric and a categorical signal."""
    rng = SeededRng(seed)
    labels = np.where(np.arange(n) % 2 == 0, "Normal", "DDoS_UDP")
    return pd.DataFrame({
        "frame.time": [f"2021-11-{i:02d}" for i in range(n)],
        "ip.src_host": [f"192.168.0.{i}" for i in range(n)],
        "tcp.len": np.round(rng.uniform(0, 100, n), 3),
        "udp.time_delta": np.round(rng.normal(n), 4),
        "proto": np.where(labels == "Normal", "tcp", np.where(np.arange(n) % 4 == 1, "udp", "icmp")),
        "mqtt.topic": np.where(np.arange(n) % 3 == 0, "0", "Temperature_and_Humidity"),
        "Attack_label": (labels != "Normal").astype(int),
        "Attack_type": labels,
    })


@pytest.fixture
def flows_csv(tmp_path):
    path = tmp_path / "flows.csv"
    flows_frame().to_csv(path, index=False)
    return path


def test_load_csv_infers_kinds(tmp_path):
    path = write_csv(tmp_path / "a.csv", "x,proto,y,Attack_type\n1,tcp,0.5,Normal\n2,,nan,DDoS_UDP\n3,udp,1e3,Normal\n")
    table = load_csv(path)
    assert table.kinds == {"x": NUMERIC, "proto": CATEGORICAL, "y": NUMERIC, "Attack_type": CATEGORICAL}
    assert table.row_count == 3
    assert table.missing_count() == 2
    assert table.frame["y"].iloc[2] == 1000.0
    assert table.frame["proto"].iloc[1] is None


def test_load_csv_header_only(tmp_path):
    table = load_csv(write_csv(tmp_path / "h.csv", "a,b,Attack_type\n"))
    assert table.row_count == 0
    assert table.columns == ["a", "b", "Attack_type"]


def test_load_csv_ragged_row_reports_line(tmp_path):
    path = write_csv(tmp_path / "r.csv", "a,b,Attack_type\n1,2,Normal\n3,4,5,Normal\n")
    with pytest.raises(RaggedRowError) as info:
        load_csv(path)
    assert info.value.row == 3
    assert "line 3" in str(info.value)


def test_load_csv_short_row_reports_line(tmp_path):
    path = write_csv(tmp_path / "s.csv", "a,b,Attack_type\n1,2,Normal\n3,Normal\n5,6,MITM\n")
    with pytest.raises(RaggedRowError) as info:
        load_csv(path)
    assert info.value.row == 3
    assert "2 fields" in str(info.value)


def test_load_csv_extra_field_on_first_row(tmp_path):
    path = write_csv(tmp_path / "x.csv", "a,b,Attack_type\n1,2,Normal,EXTRA\n4,5,MITM\n")
    with pytest.raises(RaggedRowError) as info:
        load_csv(path)
    assert info.value.row == 2


def test_load_csv_skips_blank_lines_and_quoted_commas(tmp_path):
    path = write_csv(tmp_path / "q.csv", 'a,proto,Attack_type\n1,"tcp,udp",Normal\n\n2,tcp,MITM\n')
    table = load_csv(path)
    assert table.row_count == 2
    assert table.frame["proto"].tolist() == ["tcp,udp", "tcp"]
    assert table.frame["Attack_type"].tolist() == ["Normal", "MITM"]


def test_load_csv_rejects_invalid_utf8(tmp_path):
    path = tmp_path / "bin.csv"
    path.write_bytes(b"a,Attack_type\n1,Normal\n\xff\xfe,MITM\n")
    with pytest.raises(InputError) as info:
        load_csv(path)
    assert "byte offset 23" in str(info.value)
    assert "bin.csv" in str(info.value)


def test_load_csv_column_errors(tmp_path):
    with pytest.raises(ColumnError):
        load_csv(write_csv(tmp_path / "n.csv", "a,b\n1,2\n"))
    with pytest.raises(ColumnError):
        load_csv(write_csv(tmp_path / "d.csv", "a,a,Attack_type\n1,2,Normal\n"))
    with pytest.raises(FileNotFoundError) as info:
        load_csv(tmp_path / "missing.csv")
    assert "missing.csv" in str(info.value)


def test_clean_deduplicates_and_fills(tmp_path):
    text = (
        "n,c,Attack_type\n"
        "1,tcp,Normal\n"
        "1,tcp,Normal\n"
        ",udp,Normal\n"
        "5,,DDoS_UDP\n"
        "9,udp,DDoS_UDP\n"
        "4,tcp,\n"
    )
    table = clean(load_csv(write_csv(tmp_path / "c.csv", text)))
    assert table.row_count == 4
    assert table.missing_count() == 0
    # median of 1, 5, 9 after dedupe and label drop
    assert table.frame["n"].tolist() == [1.0, 5.0, 5.0, 9.0]
    # mode of tcp, udp, udp
    assert table.frame["c"].tolist() == ["tcp", "udp", "udp", "udp"]


def test_clean_rejects_empty_column(tmp_path):
    with pytest.raises(ColumnError):
        clean(load_csv(write_csv(tmp_path / "e.csv", "n,empty,Attack_type\n1,,Normal\n2,,Normal\n")))


def test_select_features(flows_csv):
    table = load_csv(flows_csv)
    kept = select_features(table, FIXTURE_DROP)
    assert "frame.time" not in kept.columns
    assert "Attack_type" in kept.columns
    assert set(kept.kinds) == set(kept.columns)
    with pytest.raises(ColumnError):
        select_features(table, ("no.such.column",))
    with pytest.raises(ColumnError):
        select_features(table, ("Attack_type",))


def test_label_codec():
    codec = LabelCodec.edge_iiot()
    assert len(codec) == 15
    assert codec.encode("Normal") == 0
    assert codec.decode(codec.encode("MITM")) == "MITM"
    with pytest.raises(LabelError):
        codec.encode("Botnet")
    with pytest.raises(LabelError):
        codec.decode(15)
    with pytest.raises(LabelError):
        LabelCodec(("a", "a"))


def test_encode_label_and_onehot(flows_csv):
    table = select_features(clean(load_csv(flows_csv)), FIXTURE_DROP)
    encoded = encode_labels_and_categoricals(table, onehot_columns=("mqtt.topic",))
    proto = encoded.encoders.encoders["proto"]
    assert proto.kind == "label"
    assert proto.categories == ["tcp", "udp", "icmp"]
    assert encoded.encoders.feature_names == [
        "tcp.len", "udp.time_delta", "proto", "mqtt.topic=0", "mqtt.topic=Temperature_and_Humidity",
    ]
    assert encoded.matrix.shape == (40, 5)
    assert_array_equal(encoded.matrix[:, 3] + encoded.matrix[:, 4], np.ones(40))
    assert encoded.labels[:4].tolist() == [0, 6, 0, 6]


def test_encoders_transform_unseen_values(flows_csv):
    table = select_features(clean(load_csv(flows_csv)), FIXTURE_DROP)
    encoded = encode_labels_and_categoricals(table, onehot_columns=("mqtt.topic",))
    fresh = table.frame.head(2).copy()
    fresh["proto"] = ["sctp", "tcp"]
    fresh["mqtt.topic"] = ["Unknown", "0"]
    out = encoded.encoders.transform(RawTable(fresh, table.kinds, table.label_column))
    assert out[0, 2] == -1
    assert out[1, 2] == 0
    assert_array_equal(out[0, 3:], [0.0, 0.0])
    assert_array_equal(out[1, 3:], [1.0, 0.0])


def test_encode_rejects_unknown_labels(tmp_path):
    table = load_csv(write_csv(tmp_path / "u.csv", "a,Attack_type\n1,Botnet\n"))
    with pytest.raises(LabelError):
        encode_labels_and_categoricals(table)


def test_standardize_fit_apply():
    train = np.array([[1.0, 5.0, 2.0], [3.0, 5.0, 4.0], [5.0, 5.0, 9.0]])
    stats = standardize_fit(train)
    assert_array_equal(stats.zero_std, [False, True, False])
    z = standardize_apply(train, stats)
    assert_allclose(z.mean(axis=0), [0.0, 0.0, 0.0], atol=1e-12)
    assert_allclose(z[:, [0, 2]].std(axis=0), [1.0, 1.0])
    assert_array_equal(z[:, 1], [0.0, 0.0, 0.0])
    test = standardize_apply(np.array([[3.0, 100.0, 5.0]]), stats)
    assert test[0, 0] == 0.0 and test[0, 1] == 0.0
    with pytest.raises(DimensionError):
        standardize_apply(np.zeros((2, 4)), stats)
    again = StandardizationStats.from_dict(stats.to_dict())
    assert_array_equal(again.mean, stats.mean)


def test_stratified_split_balanced():
    X = np.arange(200, dtype=float).reshape(100, 2)
    Y = np.repeat([0, 1], 50)
    train, test = stratified_split(X, Y, SplitSpec(0.2, True, 42))
    assert test.class_counts()[:2].tolist() == [10, 10]
    assert len(train) == 80
    rows = np.concatenate([train.X[:, 0], test.X[:, 0]])
    assert sorted(rows.tolist()) == X[:, 0].tolist()
    _, again_test = stratified_split(X, Y, SplitSpec(0.2, True, 42))
    assert_array_equal(again_test.X, test.X)
    other = stratified_split(X, Y, SplitSpec(0.2, True, 7))[1]
    assert not np.array_equal(other.X, test.X)


def test_stratified_split_edge_cases():
    X = np.zeros((5, 1))
    Y = np.array([0, 0, 0, 0, 1])
    with pytest.raises(LabelError) as info:
        stratified_split(X, Y, SplitSpec())
    assert "Backdoor" in str(info.value)
    train, test = stratified_split(np.zeros((10, 1)), np.zeros(10, dtype=int), SplitSpec(0.3, False, 1))
    assert (len(train), len(test)) == (7, 3)
    with pytest.raises(ConfigError):
        SplitSpec(test_fraction=1.0)


def test_stratified_split_unbalanced_proportions():
    counts = [53, 17, 7, 3, 2]
    Y = np.repeat(np.arange(len(counts)), counts)
    X = np.arange(len(Y), dtype=float).reshape(-1, 1)
    train, test = stratified_split(X, Y, SplitSpec(0.3, True, 5))
    for label, n in enumerate(counts):
        in_test = int(test.class_counts()[label])
        assert abs(in_test - 0.3 * n) <= 1, label
        assert 1 <= in_test < n
        assert in_test + int(train.class_counts()[label]) == n


def test_stratified_subsample():
    Y = np.concatenate([np.zeros(1000, dtype=int), np.ones(30, dtype=int), np.full(3, 2)])
    keep = stratified_subsample(np.zeros((len(Y), 1)), Y, 0.1, seed=42)
    kept = np.bincount(Y[keep])
    assert kept.tolist() == [100, 3, 2]
    assert_array_equal(keep, np.sort(keep))
    assert_array_equal(keep, stratified_subsample(np.zeros((len(Y), 1)), Y, 0.1, seed=42))


def test_labeled_dataset_checks():
    codec = LabelCodec.edge_iiot()
    with pytest.raises(LabelError):
        LabeledDataset(np.zeros((2, 3)), [0, 15], codec)
    with pytest.raises(DimensionError):
        LabeledDataset(np.zeros((2, 3)), [0], codec)
    data = LabeledDataset(np.zeros((2, 3)), [0, 3], codec)
    grown = data.append(np.ones((2, 3)), 3)
    assert grown.class_counts()[3] == 3
    assert grown.synthetic.tolist() == [False, False, True, True]
    assert len(grown.class_rows(3)) == 1


def test_prepare_and_bundle_round_trip(flows_csv, tmp_path):
    bundle = prepare_dataset(flows_csv, drop_columns=FIXTURE_DROP, onehot_columns=("mqtt.topic",),
                             split=SplitSpec(0.25, True, 3), expected_width=None)
    assert bundle.train.width == 5
    assert len(bundle.train) + len(bundle.test) == 40
    assert_allclose(bundle.train.X.mean(axis=0), np.zeros(5), atol=1e-12)

    save_bundle(tmp_path / "bundle", bundle)
    loaded = load_bundle(tmp_path / "bundle")
    assert_array_equal(loaded.train.X, bundle.train.X)
    assert_array_equal(loaded.test.y, bundle.test.y)
    assert loaded.feature_names == bundle.feature_names
    assert loaded.split == bundle.split
    assert loaded.manifest() == bundle.manifest()


def test_bundle_bytes_are_reproducible(flows_csv, tmp_path):
    def build(target):
        bundle = prepare_dataset(flows_csv, drop_columns=FIXTURE_DROP, onehot_columns=(),
                                 split=SplitSpec(0.25, True, 3), expected_width=None)
        save_bundle(target, bundle)
        return {p.name: p.read_bytes() for p in sorted(target.iterdir())}

    first, second = build(tmp_path / "one"), build(tmp_path / "two")
    assert first.keys() == second.keys()
    assert "manifest.json" in first
    for name in first:
        assert first[name] == second[name], name


def test_save_bundle_replaces_existing(flows_csv, tmp_path):
    bundle = prepare_dataset(flows_csv, drop_columns=FIXTURE_DROP, onehot_columns=(), expected_width=None)
    target = tmp_path / "bundle"
    target.mkdir()
    (target / "stale.txt").write_text("old")
    save_bundle(target, bundle)
    assert not (target / "stale.txt").exists()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bundle", "flows.csv"]


def test_load_bundle_errors(tmp_path):
    with pytest.raises(BundleError):
        load_bundle(tmp_path / "nothing")
    (tmp_path / "foreign").mkdir()
    (tmp_path / "foreign" / "manifest.json").write_text('{"format": "other", "version": 1}')
    with pytest.raises(BundleError):
        load_bundle(tmp_path / "foreign")


def test_standardization_uses_train_rows_only(flows_csv):
    bundle = prepare_dataset(flows_csv, drop_columns=FIXTURE_DROP, onehot_columns=(),
                             split=SplitSpec(0.25, True, 3), expected_width=None)
    stats = bundle.stats
    scale = np.where(stats.zero_std, 1.0, stats.std)
    raw_train = bundle.train.X * scale + stats.mean
    raw_test = bundle.test.X * scale + stats.mean
    varying = ~stats.zero_std

    refit_train = standardize_fit(raw_train)
    assert_allclose(refit_train.mean[varying], stats.mean[varying])
    assert_allclose(refit_train.std[varying], stats.std[varying])

    refit_test = standardize_fit(raw_test)
    assert not np.allclose(refit_test.mean[varying], stats.mean[varying])
    assert not np.allclose(refit_test.std[varying], stats.std[varying])


def test_load_bundle_rejects_corrupt_matrix(flows_csv, tmp_path):
    bundle = prepare_dataset(flows_csv, drop_columns=FIXTURE_DROP, onehot_columns=(), expected_width=None)
    target = save_bundle(tmp_path / "bundle", bundle, sidecars={"notes.txt": "hello\n"})
    assert (target / "notes.txt").read_text() == "hello\n"
    X = np.load(target / "X_test.npy")
    X[0, 0] = np.nan
    np.save(target / "X_test.npy", X)
    with pytest.raises(BundleError) as info:
        load_bundle(target)
    assert "X_test" in str(info.value)
