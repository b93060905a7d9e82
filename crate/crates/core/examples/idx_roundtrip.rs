//! Write a dataset as gzip-compressed IDX files and load it back.

use rfim::data::{load_idx, synth_blobs, write_idx};

fn main() {
    let ds = synth_blobs(10, 4, 2.0, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = (dir.path().join("images.idx.gz"), dir.path().join("labels.idx.gz"));
    write_idx(&ds, 2, 2, &images, &labels).unwrap();
    let back = load_idx(&images, &labels).unwrap();
    println!("{} samples of dim {}, labels {:?}", back.len(), back.dim(), back.labels);
    let err = back.features.sub(&ds.features).max_abs();
    println!("max quantization error {err:.4} (bytes hold v*255)");
}
