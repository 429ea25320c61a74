use akp_audit::dataset::{load_dataset, load_dataset_with, parse_csv, parse_jsonl, Dataset, Format, LoadOptions};
use akp_audit::simindex::cosine_similarity;
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (1usize..5, 1usize..4).prop_flat_map(|(d, k)| {
        let rows = prop::collection::vec(
            (prop::collection::vec(-1e3f64..1e3, d), 1..=k as u32, "[a-zA-Z0-9 ,\"_-]{0,8}"),
            k..k + 12,
        );
        rows.prop_map(move |rows| {
            let mut ids = Vec::new();
            let mut vectors = Vec::new();
            let mut profiles = Vec::new();
            for (i, (v, p, tag)) in rows.into_iter().enumerate() {
                ids.push(format!("{tag}#{i}"));
                vectors.push(v);
                // The first k rows cover every profile.
                profiles.push(if i < k { i as u32 + 1 } else { p });
            }
            Dataset::new(ids, vectors, profiles, Some("Q1".into())).unwrap()
        })
    })
}

fn nonzero_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..10)
        .prop_filter("rows must be nonzero", |rows| {
            rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        })
}

proptest! {
    #[test]
    fn jsonl_round_trip(ds in arb_dataset()) {
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = parse_jsonl(buf.as_slice(), LoadOptions::default()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn csv_round_trip(ds in arb_dataset()) {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = parse_csv(buf.as_slice(), LoadOptions::default()).unwrap();
        prop_assert_eq!(back.ids(), ds.ids());
        prop_assert_eq!(back.profiles(), ds.profiles());
        prop_assert_eq!(back.as_flat(), ds.as_flat());
    }

    #[test]
    fn normalize_is_idempotent_and_keeps_direction(rows in nonzero_rows()) {
        let n = rows.len();
        let ds = Dataset::new((0..n).map(|i| i.to_string()).collect(), rows, vec![1; n], None).unwrap();
        let once = ds.unit_normalize().unwrap();
        let twice = once.unit_normalize().unwrap();
        prop_assert!(once.is_normalized());
        for i in 0..n {
            for (a, b) in once.row(i).iter().zip(twice.row(i)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((cosine_similarity(ds.row(i), once.row(i)).unwrap() - 1.0).abs() <= 1e-12);
        }
        prop_assert_eq!(once.ids(), ds.ids());
        prop_assert_eq!(once.profiles(), ds.profiles());
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::new(
        vec!["a".into(), "b, with comma".into(), "c".into()],
        vec![vec![1.0, 2.0], vec![0.5, -0.25], vec![3.0, 1e-300]],
        vec![1, 2, 2],
        None,
    )
    .unwrap();
    for (name, format) in [("d.jsonl", Format::Jsonl), ("d.csv", Format::Csv)] {
        let path = dir.path().join(name);
        ds.save(&path, format).unwrap();
        assert_eq!(Format::from_path(&path), format);
        let back = load_dataset(&path, format).unwrap();
        assert_eq!(back.as_flat(), ds.as_flat());
        assert_eq!(back.ids(), ds.ids());
    }
}

#[test]
fn loading_never_touches_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let text = "{\"id\":\"x\",\"vector\":[3,4],\"profile\":2}\n{\"id\":\"y\",\"vector\":[1,0],\"profile\":5}\n";
    std::fs::write(&path, text).unwrap();
    let ds = load_dataset_with(&path, Format::Jsonl, LoadOptions { remap_sparse_profiles: true }).unwrap();
    assert_eq!(ds.profiles(), &[1, 2]);
    assert_eq!(ds.original_labels(), Some(&[2i64, 5][..]));
    assert!(load_dataset(&path, Format::Jsonl).is_err());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn missing_file_is_an_input_error() {
    let err = load_dataset(std::path::Path::new("/nonexistent/d.jsonl"), Format::Jsonl).unwrap_err();
    assert!(err.is_input_error());
}
