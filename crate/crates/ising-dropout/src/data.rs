//! IDX dataset ingestion, normalization, shuffling, mini-batching, and
//! desk-scale subsetting.
//!
//! The IDX container is read bit-exactly: 4-byte big-endian magic, one
//! 4-byte big-endian size per dimension, then the row-major unsigned-byte
//! payload. Gzip is detected from the two-byte header so both compressed
//! and raw files load through the same path.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Which split a dataset came from. Purely a tag for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// An in-memory dataset of flattened images in `[0,1]` with integer labels.
#[derive(Debug, Clone)]
pub struct DataSet {
    images: Vec<Vec<f64>>,
    labels: Vec<u8>,
    image_rows: usize,
    image_cols: usize,
    split: Split,
}

impl DataSet {
    /// Builds a dataset from pre-normalized vectors. All images must share
    /// one length, pixels must lie in `[0,1]`, labels below `NUM_CLASSES`.
    pub fn from_parts(images: Vec<Vec<f64>>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let dim = images.first().map_or(0, |v| v.len());
        for (i, img) in images.iter().enumerate() {
            if img.len() != dim {
                return Err(Error::Consistency(format!(
                    "image {i} has length {} instead of {dim}",
                    img.len()
                )));
            }
            if img.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Input(format!("image {i} has a pixel outside [0,1]")));
            }
        }
        if let Some(bad) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Input(format!(
                "label {} at index {bad} is not a class below {NUM_CLASSES}",
                labels[bad]
            )));
        }
        Ok(DataSet {
            images,
            labels,
            image_rows: 1,
            image_cols: dim,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Flattened image dimension (rows * cols).
    pub fn dim(&self) -> usize {
        self.image_rows * self.image_cols
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_rows, self.image_cols)
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// A view over the whole set in stored order.
    pub fn identity_view(&self) -> DataView<'_> {
        DataView {
            data: self,
            order: (0..self.len()).collect(),
        }
    }
}

/// A mini-batch: borrowed image vectors plus their labels.
pub struct Batch<'a> {
    pub images: Vec<&'a [f64]>,
    pub labels: Vec<u8>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// A permuted, borrowing view of a dataset.
pub struct DataView<'a> {
    data: &'a DataSet,
    order: Vec<usize>,
}

impl<'a> DataView<'a> {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn image(&self, i: usize) -> &'a [f64] {
        self.data.image(self.order[i])
    }

    pub fn label(&self, i: usize) -> u8 {
        self.data.label(self.order[i])
    }

    /// Splits the view into consecutive chunks of at most `q` samples.
    /// The final batch may be smaller; the union of batches is the view.
    pub fn batches(&self, q: usize) -> impl Iterator<Item = Batch<'a>> + '_ {
        assert!(q >= 1, "batch size must be at least 1");
        self.order.chunks(q).map(move |chunk| Batch {
            images: chunk.iter().map(|&i| self.data.image(i)).collect(),
            labels: chunk.iter().map(|&i| self.data.label(i)).collect(),
        })
    }
}

/// Deterministic epoch shuffle: the permutation depends only on
/// `(seed, epoch)`, so reruns and resumed runs see identical order.
pub fn shuffle_epoch(data: &DataSet, seed: u64, epoch: u64) -> DataView<'_> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    DataView { data, order }
}

/// Draws `n` samples without replacement, deterministically in `seed`.
///
/// In stratified mode the class proportions of the source are kept within
/// one sample per class (largest-remainder allocation).
pub fn subsample(data: &DataSet, n: usize, seed: u64, stratified: bool) -> Result<DataSet> {
    if n > data.len() {
        return Err(Error::Input(format!(
            "cannot subsample {n} from {} samples",
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if !stratified {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(n);
        order
    } else {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
        for i in 0..data.len() {
            by_class[data.label(i) as usize].push(i);
        }
        // Largest-remainder apportionment of n across classes.
        let total = data.len() as f64;
        let shares: Vec<f64> = by_class
            .iter()
            .map(|c| n as f64 * c.len() as f64 / total)
            .collect();
        let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
        let mut leftover = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
        order.sort_by(|&a, &b| {
            let ra = shares[a] - shares[a].floor();
            let rb = shares[b] - shares[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &c in &order {
            if leftover == 0 {
                break;
            }
            if counts[c] < by_class[c].len() {
                counts[c] += 1;
                leftover -= 1;
            }
        }
        let mut picked = Vec::with_capacity(n);
        for (c, members) in by_class.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            picked.extend_from_slice(&members[..counts[c]]);
        }
        picked.sort_unstable();
        picked
    };
    let images = picked.iter().map(|&i| data.images[i].clone()).collect();
    let labels = picked.iter().map(|&i| data.labels[i]).collect();
    Ok(DataSet {
        images,
        labels,
        image_rows: data.image_rows,
        image_cols: data.image_cols,
        split: data.split,
    })
}

fn open_maybe_gzip(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut head = [0u8; 2];
    let mut peeked = 0;
    while peeked < 2 {
        match reader.read(&mut head[peeked..]) {
            Ok(0) => break,
            Ok(k) => peeked += k,
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    let chained = std::io::Cursor::new(head[..peeked].to_vec()).chain(reader);
    if peeked == 2 && head == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(chained)))
    } else {
        Ok(Box::new(chained))
    }
}

fn read_u32_be(reader: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::format(path, "truncated header"))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_payload(reader: &mut dyn Read, len: usize, path: &Path) -> Result<Vec<u8>> {
    let mut payload = vec![0u8; len];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::format(path, "truncated payload"))?;
    let mut rest = [0u8; 1];
    match reader.read(&mut rest) {
        Ok(0) => Ok(payload),
        Ok(_) => Err(Error::format(path, "trailing bytes after payload")),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Loads an image/label IDX pair into a normalized dataset.
///
/// Pixels are scaled from `{0..255}` to `[0,1]` by division by 255. The
/// image count of both files must agree.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<DataSet> {
    // Images: magic, count, rows, cols, then count*rows*cols bytes.
    let mut r = open_maybe_gzip(images_path)?;
    let magic = read_u32_be(r.as_mut(), images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            images_path,
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(r.as_mut(), images_path)? as usize;
    let rows = read_u32_be(r.as_mut(), images_path)? as usize;
    let cols = read_u32_be(r.as_mut(), images_path)? as usize;
    let dim = rows * cols;
    let pixels = read_payload(r.as_mut(), count * dim, images_path)?;

    // Labels: magic, count, then count bytes.
    let mut r = open_maybe_gzip(labels_path)?;
    let magic = read_u32_be(r.as_mut(), labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            labels_path,
            format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let label_count = read_u32_be(r.as_mut(), labels_path)? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let labels = read_payload(r.as_mut(), label_count, labels_path)?;
    if let Some(bad) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(Error::format(
            labels_path,
            format!("label {} at index {bad} out of range", labels[bad]),
        ));
    }

    let images: Vec<Vec<f64>> = pixels
        .chunks_exact(dim)
        .map(|chunk| chunk.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Ok(DataSet {
        images,
        labels,
        image_rows: rows,
        image_cols: cols,
        split,
    })
}

/// Writes the dataset back out as an uncompressed IDX pair (the canonical
/// dump). Pixels are rounded to the nearest byte, which inverts the
/// division by 255 exactly for data that came from bytes.
pub fn write_idx(data: &DataSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    let file = File::create(images_path).map_err(|e| Error::io(images_path, e))?;
    let mut w = BufWriter::new(file);
    let header = [
        IMAGE_MAGIC,
        data.len() as u32,
        data.image_rows as u32,
        data.image_cols as u32,
    ];
    for word in header {
        w.write_all(&word.to_be_bytes())
            .map_err(|e| Error::io(images_path, e))?;
    }
    for img in &data.images {
        let bytes: Vec<u8> = img.iter().map(|&p| (p * 255.0).round() as u8).collect();
        w.write_all(&bytes).map_err(|e| Error::io(images_path, e))?;
    }
    w.flush().map_err(|e| Error::io(images_path, e))?;

    let file = File::create(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&LABEL_MAGIC.to_be_bytes())
        .map_err(|e| Error::io(labels_path, e))?;
    w.write_all(&(data.len() as u32).to_be_bytes())
        .map_err(|e| Error::io(labels_path, e))?;
    w.write_all(&data.labels)
        .map_err(|e| Error::io(labels_path, e))?;
    w.flush().map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

pub mod synthetic {
    //! Small generated datasets for examples and tests.

    use super::*;
    use rand::Rng;

    /// Class blobs in `[0,1]^dim`: class `c` peaks on the coordinates
    /// congruent to `c` modulo the class count, and samples are jittered
    /// around that center, clamped into the unit box. With `dim >=
    /// classes` the centers are distinct and well separated.
    pub fn gaussian_blobs(
        n: usize,
        dim: usize,
        classes: usize,
        spread: f64,
        seed: u64,
    ) -> DataSet {
        assert!(classes >= 2 && classes <= NUM_CLASSES);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|c| {
                (0..dim)
                    .map(|d| if d % classes == c { 0.85 } else { 0.15 })
                    .collect()
            })
            .collect();
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            let img: Vec<f64> = centers[c]
                .iter()
                .map(|&mu| (mu + rng.gen_range(-spread..spread)).clamp(0.0, 1.0))
                .collect();
            images.push(img);
            labels.push(c as u8);
        }
        DataSet::from_parts(images, labels, Split::Train).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write as _;

    fn write_image_file(path: &Path, count: u32, rows: u32, cols: u32, payload: &[u8]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&count.to_be_bytes());
        bytes.extend_from_slice(&rows.to_be_bytes());
        bytes.extend_from_slice(&cols.to_be_bytes());
        bytes.extend_from_slice(payload);
        std::fs::write(path, bytes).unwrap();
    }

    fn write_label_file(path: &Path, labels: &[u8]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        std::fs::write(path, bytes).unwrap();
    }

    fn toy_idx_pair(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let images = dir.join("imgs.idx");
        let labels = dir.join("labels.idx");
        let payload: Vec<u8> = (0..5 * 4).map(|i| (i * 13 % 256) as u8).collect();
        write_image_file(&images, 5, 2, 2, &payload);
        write_label_file(&labels, &[0, 1, 2, 9, 4]);
        (images, labels)
    }

    #[test]
    fn load_idx_normalizes_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = toy_idx_pair(dir.path());
        let data = load_idx(&images, &labels, Split::Train).unwrap();
        assert_eq!(data.len(), 5);
        assert_eq!(data.dim(), 4);
        assert_eq!(data.label(3), 9);
        assert!((data.image(1)[0] - (4.0 * 13.0) / 255.0).abs() < 1e-15);
        for i in 0..data.len() {
            assert!(data.image(i).iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn load_idx_accepts_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = toy_idx_pair(dir.path());
        let gz_images = dir.path().join("imgs.idx.gz");
        let mut enc = GzEncoder::new(File::create(&gz_images).unwrap(), Compression::fast());
        enc.write_all(&std::fs::read(&images).unwrap()).unwrap();
        enc.finish().unwrap();
        let plain = load_idx(&images, &labels, Split::Train).unwrap();
        let zipped = load_idx(&gz_images, &labels, Split::Train).unwrap();
        assert_eq!(plain.image(2), zipped.image(2));
        assert_eq!(plain.labels(), zipped.labels());
    }

    #[test]
    fn load_idx_rejects_swapped_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = toy_idx_pair(dir.path());
        // Passing the image file as labels trips the label-magic check.
        let err = load_idx(&images, &images, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let err = load_idx(&labels, &labels, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn load_idx_rejects_truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = toy_idx_pair(dir.path());
        let truncated = dir.path().join("trunc.idx");
        let full = std::fs::read(&images).unwrap();
        std::fs::write(&truncated, &full[..full.len() - 3]).unwrap();
        assert!(matches!(
            load_idx(&truncated, &labels, Split::Train),
            Err(Error::Format { .. })
        ));

        let short_labels = dir.path().join("short.idx");
        write_label_file(&short_labels, &[1, 2, 3]);
        assert!(matches!(
            load_idx(&images, &short_labels, Split::Train),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn canonical_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = toy_idx_pair(dir.path());
        let data = load_idx(&images, &labels, Split::Train).unwrap();
        let out_images = dir.path().join("dump.idx");
        let out_labels = dir.path().join("dump-labels.idx");
        write_idx(&data, &out_images, &out_labels).unwrap();
        let reloaded = load_idx(&out_images, &out_labels, Split::Train).unwrap();
        assert_eq!(reloaded.labels(), data.labels());
        for i in 0..data.len() {
            assert_eq!(reloaded.image(i), data.image(i), "pixels differ at {i}");
        }
    }

    #[test]
    fn shuffle_is_permutation_and_deterministic() {
        let data = synthetic::gaussian_blobs(500, 4, 5, 0.05, 3);
        let v1 = shuffle_epoch(&data, 42, 0);
        let v2 = shuffle_epoch(&data, 42, 0);
        let v3 = shuffle_epoch(&data, 42, 1);
        let mut seen: Vec<usize> = v1.order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..500).collect::<Vec<_>>());
        assert_eq!(v1.order, v2.order);
        assert_ne!(v1.order, v3.order);
    }

    #[test]
    fn batches_chunk_arithmetic() {
        let data = synthetic::gaussian_blobs(100, 3, 2, 0.05, 1);
        let view = data.identity_view();
        let sizes: Vec<usize> = view.batches(32).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![32, 32, 32, 4]);
        let single: Vec<usize> = view.batches(1000).map(|b| b.len()).collect();
        assert_eq!(single, vec![100]);

        let mut all_labels = Vec::new();
        for b in view.batches(32) {
            all_labels.extend_from_slice(&b.labels);
        }
        let direct: Vec<u8> = (0..view.len()).map(|i| view.label(i)).collect();
        assert_eq!(all_labels, direct);
    }

    #[test]
    fn subsample_contracts() {
        let data = synthetic::gaussian_blobs(1000, 3, 10, 0.05, 5);
        let full = subsample(&data, 1000, 7, true).unwrap();
        assert_eq!(full.len(), 1000);

        let strat = subsample(&data, 100, 7, true).unwrap();
        let mut counts = [0usize; 10];
        for &l in strat.labels() {
            counts[l as usize] += 1;
        }
        for c in counts {
            assert!((9..=11).contains(&c), "class count {c} not within +/-1");
        }

        let a = subsample(&data, 64, 11, true).unwrap();
        let b = subsample(&data, 64, 11, true).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.image(0), b.image(0));

        assert!(matches!(
            subsample(&data, 1001, 0, false),
            Err(Error::Input(_))
        ));
    }
}
