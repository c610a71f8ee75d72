use satfield::bundle::{load_dataset, write_dataset};
use satfield::imageio::PixelFormat;
use satfield::synth::{synth_scene, SynthOptions};

#[test]
fn ingest_serialize_ingest_is_exact() {
    let (ds, _) = synth_scene(&SynthOptions {
        grid: 10,
        test_months: vec![6],
        ..SynthOptions::default()
    })
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for format in [PixelFormat::Png8, PixelFormat::Png16, PixelFormat::TiffF32] {
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        let _ = std::fs::remove_dir_all(&a);
        let _ = std::fs::remove_dir_all(&b);
        write_dataset(&a, &ds, None, format).unwrap();
        let first = load_dataset(&a, 1).unwrap();
        write_dataset(&b, &first.dataset, Some(&first.meta), format).unwrap();
        let second = load_dataset(&b, 1).unwrap();
        assert_eq!(first, second, "{format:?}");
        assert_eq!(first.dataset.images.len(), ds.images.len());
        // Images load in file-name order.
        for x in &first.dataset.images {
            let y = &ds.images[ds.index_of(&x.id).expect("same ids")];
            assert_eq!(x.month(), y.month());
            assert!(x.pixels.max_abs_diff(&y.pixels) <= 0.5 / 255.0 + 1e-12);
        }
    }
}

#[test]
fn downsampled_load_shrinks_images() {
    let (ds, _) = synth_scene(&SynthOptions {
        grid: 12,
        ..SynthOptions::default()
    })
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), &ds, None, PixelFormat::Png16).unwrap();
    let small = load_dataset(tmp.path(), 3).unwrap().dataset;
    assert_eq!(small.images[0].pixels.width, 4);
    assert!(load_dataset(tmp.path(), 0).is_err());
    assert!(load_dataset(&tmp.path().join("missing"), 1).is_err());
}
