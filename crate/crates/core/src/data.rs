//! Dataset ingestion and synthesis: MNIST IDX files, the linear-Gaussian
//! recovery dataset, the bottleneck-collapse dataset, and grid worlds.

use crate::error::{Error, Result};
use crate::model::matmul_plain;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use std::fs;
use std::io::Read;
use std::path::Path;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Images scaled to [0, 1] with class labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    /// [n, obs_dim] pixel matrix, all entries in [0, 1].
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub split: String,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, split: &str) -> Result<Self> {
        if images.rank() != 2 || images.shape()[0] != labels.len() {
            return Err(Error::Contract(format!(
                "images {:?} do not match {} labels",
                images.shape(),
                labels.len()
            )));
        }
        if !images.data().iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return Err(Error::Contract(
                "image pixels must lie in [0, 1]".into(),
            ));
        }
        Ok(LabeledDataset {
            images,
            labels,
            split: split.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn image(&self, i: usize) -> Result<Tensor> {
        self.images.row(i)
    }

    /// Gather rows into a batch matrix plus matching labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let cols = self.obs_dim();
        let mut data = Vec::with_capacity(indices.len() * cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Contract(format!(
                    "index {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.images.data()[i * cols..(i + 1) * cols]);
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new(vec![indices.len(), cols], data)?, labels))
    }

    /// Contiguous sub-range as its own dataset.
    pub fn slice(&self, start: usize, len: usize, split: &str) -> Result<LabeledDataset> {
        if start + len > self.len() || len == 0 {
            return Err(Error::Contract(format!(
                "slice [{start}, {}) out of range for {} samples",
                start + len,
                self.len()
            )));
        }
        let cols = self.obs_dim();
        let images = Tensor::new(
            vec![len, cols],
            self.images.data()[start * cols..(start + len) * cols].to_vec(),
        )?;
        LabeledDataset::new(images, self.labels[start..start + len].to_vec(), split)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::Format(format!("{what}: file truncated in header")));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse big-endian IDX image/label files into a dataset, scaling pixels
/// by 1/255.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;
    parse_mnist_idx(&img_bytes, &lbl_bytes)
}

pub fn parse_mnist_idx(img_bytes: &[u8], lbl_bytes: &[u8]) -> Result<LabeledDataset> {
    let magic = read_u32_be(img_bytes, 0, "images")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )));
    }
    let n = read_u32_be(img_bytes, 4, "images")? as usize;
    let rows = read_u32_be(img_bytes, 8, "images")? as usize;
    let cols = read_u32_be(img_bytes, 12, "images")? as usize;
    let expected = 16 + n * rows * cols;
    if img_bytes.len() != expected {
        return Err(Error::Format(format!(
            "image payload is {} bytes, header implies {expected}",
            img_bytes.len()
        )));
    }

    let lmagic = read_u32_be(lbl_bytes, 0, "labels")?;
    if lmagic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label magic 0x{lmagic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )));
    }
    let ln = read_u32_be(lbl_bytes, 4, "labels")? as usize;
    if lbl_bytes.len() != 8 + ln {
        return Err(Error::Format(format!(
            "label payload is {} bytes, header implies {}",
            lbl_bytes.len(),
            8 + ln
        )));
    }
    if ln != n {
        return Err(Error::Format(format!(
            "{n} images but {ln} labels"
        )));
    }

    let pixels: Vec<f64> = img_bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = lbl_bytes[8..].iter().map(|&b| b as usize).collect();
    LabeledDataset::new(Tensor::new(vec![n, rows * cols], pixels)?, labels, "idx")
}

/// Serialize a dataset back into IDX bytes (images, labels). Pixels are
/// rescaled by 255 and rounded, which inverts the load scaling exactly.
pub fn serialize_mnist_idx(ds: &LabeledDataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.obs_dim() {
        return Err(Error::Contract(format!(
            "rows*cols = {} does not match obs dim {}",
            rows * cols,
            ds.obs_dim()
        )));
    }
    let n = ds.len();
    let mut img = Vec::with_capacity(16 + n * rows * cols);
    img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(ds.images.data().iter().map(|&v| (v * 255.0).round() as u8));

    let mut lbl = Vec::with_capacity(8 + n);
    lbl.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(n as u32).to_be_bytes());
    lbl.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((img, lbl))
}

/// Download the four canonical IDX files from a mirror into `dir`, verifying
/// each header against its payload length so truncation cannot pass silently.
pub fn fetch_mnist(mirror: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let files = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    for name in files {
        let url = format!("{}/{}", mirror.trim_end_matches('/'), name);
        let resp = ureq::get(&url)
            .call()
            .map_err(|e| Error::Fetch(format!("GET {url}: {e}")))?;
        let mut bytes = Vec::new();
        resp.into_reader()
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Fetch(format!("reading {url}: {e}")))?;
        verify_idx_payload(name, &bytes)?;
        fs::write(dir.join(name), &bytes)?;
    }
    Ok(())
}

fn verify_idx_payload(name: &str, bytes: &[u8]) -> Result<()> {
    let magic = read_u32_be(bytes, 0, name)?;
    let n = read_u32_be(bytes, 4, name)? as usize;
    let expected = match magic {
        IDX_IMAGE_MAGIC => {
            let rows = read_u32_be(bytes, 8, name)? as usize;
            let cols = read_u32_be(bytes, 12, name)? as usize;
            16 + n * rows * cols
        }
        IDX_LABEL_MAGIC => 8 + n,
        other => {
            return Err(Error::Fetch(format!(
                "{name}: unexpected magic 0x{other:08x}"
            )))
        }
    };
    if bytes.len() != expected {
        return Err(Error::Fetch(format!(
            "{name}: payload {} bytes, header implies {expected} (truncated download?)",
            bytes.len()
        )));
    }
    Ok(())
}

/// Synthetic recovery dataset: psi = A * g(B * phi) + sigma * noise with
/// g = identity (linear variant) or tanh (bottleneck-collapse variant).
#[derive(Clone, Debug)]
pub struct SyntheticLinearGaussian {
    /// Mixing matrix A [D, k].
    pub mixing: Tensor,
    /// Structure map B [k, d].
    pub structure: Tensor,
    pub noise_sigma: f64,
    pub tanh_nonlinearity: bool,
    /// True content [n, d].
    pub phi_true: Tensor,
    /// Observations [n, D].
    pub psi: Tensor,
}

impl SyntheticLinearGaussian {
    pub fn len(&self) -> usize {
        self.phi_true.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn content_dim(&self) -> usize {
        self.phi_true.shape()[1]
    }

    pub fn obs_dim(&self) -> usize {
        self.psi.shape()[1]
    }

    /// The effective linear map A*B [D, d] (meaningful for the linear variant).
    pub fn effective_map(&self) -> Result<Tensor> {
        matmul_plain(&self.mixing, &self.structure)
    }
}

fn generate_synthetic(
    obs_dim: usize,
    content_dim: usize,
    latent_dim: usize,
    n: usize,
    sigma: f64,
    tanh_nonlinearity: bool,
    seed: u64,
) -> Result<SyntheticLinearGaussian> {
    if content_dim > latent_dim || latent_dim > obs_dim {
        return Err(Error::Contract(format!(
            "need d <= k <= D, got d={content_dim} k={latent_dim} D={obs_dim}"
        )));
    }
    if n == 0 {
        return Err(Error::Contract("need at least one sample".into()));
    }
    if sigma < 0.0 {
        return Err(Error::Contract(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut rng = SeededRng::new(seed);
    let mut mixing = rng.normal_tensor(&[obs_dim, latent_dim]);
    let a_scale = 1.0 / (latent_dim as f64).sqrt();
    for v in mixing.data_mut() {
        *v *= a_scale;
    }
    let mut structure = rng.normal_tensor(&[latent_dim, content_dim]);
    let b_scale = 1.0 / (content_dim as f64).sqrt();
    for v in structure.data_mut() {
        *v *= b_scale;
    }
    let phi_true = rng.normal_tensor(&[n, content_dim]);

    // psi = g(phi * B^T) * A^T + sigma * eps, rows are samples
    let mut hidden = Tensor::zeros(&[n, latent_dim]);
    for i in 0..n {
        for k in 0..latent_dim {
            let mut acc = 0.0;
            for d in 0..content_dim {
                acc += phi_true.at2(i, d) * structure.at2(k, d);
            }
            hidden.set2(i, k, if tanh_nonlinearity { acc.tanh() } else { acc });
        }
    }
    let mut psi = Tensor::zeros(&[n, obs_dim]);
    for i in 0..n {
        for o in 0..obs_dim {
            let mut acc = 0.0;
            for k in 0..latent_dim {
                acc += hidden.at2(i, k) * mixing.at2(o, k);
            }
            let noise = if sigma > 0.0 {
                sigma * rng.standard_normal()
            } else {
                0.0
            };
            psi.set2(i, o, acc + noise);
        }
    }
    Ok(SyntheticLinearGaussian {
        mixing,
        structure,
        noise_sigma: sigma,
        tanh_nonlinearity,
        phi_true,
        psi,
    })
}

/// Linear recovery dataset (defaults elsewhere: D=100, d=4, k=8, N=10000).
pub fn make_linear_gaussian(
    obs_dim: usize,
    content_dim: usize,
    latent_dim: usize,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<SyntheticLinearGaussian> {
    generate_synthetic(obs_dim, content_dim, latent_dim, n, sigma, false, seed)
}

/// Bottleneck-collapse dataset: N=1000, d=2, D=20, tanh nonlinearity.
pub fn make_delta_dataset(seed: u64) -> SyntheticLinearGaussian {
    generate_synthetic(20, 2, 8, 1000, 0.05, true, seed).expect("fixed dims are valid")
}

/// 32x32 occupancy grid with start and goal cells; a free 4-connected path
/// between them always exists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridWorld {
    occupancy: Vec<bool>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

pub const GRID_SIZE: usize = 32;

impl GridWorld {
    pub fn new(occupancy: Vec<bool>, start: (usize, usize), goal: (usize, usize)) -> Result<Self> {
        if occupancy.len() != GRID_SIZE * GRID_SIZE {
            return Err(Error::Contract(format!(
                "occupancy must have {} cells, got {}",
                GRID_SIZE * GRID_SIZE,
                occupancy.len()
            )));
        }
        let g = GridWorld {
            occupancy,
            start,
            goal,
        };
        if !g.in_bounds(start) || !g.in_bounds(goal) {
            return Err(Error::Contract("start/goal out of bounds".into()));
        }
        if g.is_occupied(start) || g.is_occupied(goal) {
            return Err(Error::Contract("start/goal must be free cells".into()));
        }
        if !g.feasible() {
            return Err(Error::NoPath);
        }
        Ok(g)
    }

    fn in_bounds(&self, (x, y): (usize, usize)) -> bool {
        x < GRID_SIZE && y < GRID_SIZE
    }

    pub fn is_occupied(&self, (x, y): (usize, usize)) -> bool {
        self.occupancy[y * GRID_SIZE + x]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    /// Occupancy rasterized as a [1024] tensor (1 = obstacle).
    pub fn observation(&self) -> Tensor {
        Tensor::new(
            vec![GRID_SIZE * GRID_SIZE],
            self.occupancy
                .iter()
                .map(|&o| if o { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("fixed size")
    }

    pub fn free_neighbors(&self, (x, y): (usize, usize)) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if x > 0 && !self.is_occupied((x - 1, y)) {
            out.push((x - 1, y));
        }
        if x + 1 < GRID_SIZE && !self.is_occupied((x + 1, y)) {
            out.push((x + 1, y));
        }
        if y > 0 && !self.is_occupied((x, y - 1)) {
            out.push((x, y - 1));
        }
        if y + 1 < GRID_SIZE && !self.is_occupied((x, y + 1)) {
            out.push((x, y + 1));
        }
        out
    }

    /// Flood fill from the start; true when the goal is reachable.
    pub fn feasible(&self) -> bool {
        let mut seen = vec![false; GRID_SIZE * GRID_SIZE];
        let mut queue = std::collections::VecDeque::new();
        seen[self.start.1 * GRID_SIZE + self.start.0] = true;
        queue.push_back(self.start);
        while let Some(cell) = queue.pop_front() {
            if cell == self.goal {
                return true;
            }
            for nb in self.free_neighbors(cell) {
                let idx = nb.1 * GRID_SIZE + nb.0;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(nb);
                }
            }
        }
        false
    }

    /// Scenario text: 32 lines of 32 chars, '.' free, '#' obstacle,
    /// 'S' start, 'G' goal.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((GRID_SIZE + 1) * GRID_SIZE);
        for y in 0..GRID_SIZE {
            for x in 0..GRID_SIZE {
                let c = if (x, y) == self.start {
                    'S'
                } else if (x, y) == self.goal {
                    'G'
                } else if self.is_occupied((x, y)) {
                    '#'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != GRID_SIZE {
            return Err(Error::Format(format!(
                "scenario must have {GRID_SIZE} lines, got {}",
                lines.len()
            )));
        }
        let mut occupancy = vec![false; GRID_SIZE * GRID_SIZE];
        let mut start = None;
        let mut goal = None;
        for (y, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != GRID_SIZE {
                return Err(Error::Format(format!(
                    "scenario line {} has {} chars, expected {GRID_SIZE}",
                    y + 1,
                    chars.len()
                )));
            }
            for (x, c) in chars.iter().enumerate() {
                match c {
                    '.' => {}
                    '#' => occupancy[y * GRID_SIZE + x] = true,
                    'S' => {
                        if start.replace((x, y)).is_some() {
                            return Err(Error::Format("multiple start cells".into()));
                        }
                    }
                    'G' => {
                        if goal.replace((x, y)).is_some() {
                            return Err(Error::Format("multiple goal cells".into()));
                        }
                    }
                    other => {
                        return Err(Error::Format(format!(
                            "unexpected character '{other}' at line {}, column {}",
                            y + 1,
                            x + 1
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::Format("scenario missing start cell".into()))?;
        let goal = goal.ok_or_else(|| Error::Format("scenario missing goal cell".into()))?;
        GridWorld::new(occupancy, start, goal)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Random feasible grid world at the given obstacle density. Rejects and
/// resamples until the flood-fill feasibility witness holds, erroring after
/// 100 attempts.
pub fn make_gridworld(seed: u64, obstacle_density: f64) -> Result<GridWorld> {
    if !(0.0..=0.4).contains(&obstacle_density) {
        return Err(Error::Contract(format!(
            "obstacle density must lie in [0, 0.4], got {obstacle_density}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    for _ in 0..100 {
        let occupancy: Vec<bool> = (0..GRID_SIZE * GRID_SIZE)
            .map(|_| rng.next_f64() < obstacle_density)
            .collect();
        let free: Vec<(usize, usize)> = (0..GRID_SIZE * GRID_SIZE)
            .filter(|&i| !occupancy[i])
            .map(|i| (i % GRID_SIZE, i / GRID_SIZE))
            .collect();
        if free.len() < 2 {
            continue;
        }
        let start = free[rng.below(free.len())];
        let mut goal = free[rng.below(free.len())];
        let mut tries = 0;
        while goal == start && tries < 10 {
            goal = free[rng.below(free.len())];
            tries += 1;
        }
        if goal == start {
            continue;
        }
        if let Ok(world) = GridWorld::new(occupancy, start, goal) {
            return Ok(world);
        }
    }
    Err(Error::Generation(format!(
        "no feasible 32x32 map after 100 attempts at density {obstacle_density}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_fixture() -> (Vec<u8>, Vec<u8>) {
        // two 2x2 images
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&[0, 128, 255, 7, 1, 2, 3, 4]);
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&2u32.to_be_bytes());
        lbl.extend_from_slice(&[3, 9]);
        (img, lbl)
    }

    #[test]
    fn idx_fixture_round_trips_bit_exactly() {
        let (img, lbl) = tiny_fixture();
        let ds = parse_mnist_idx(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.obs_dim(), 4);
        assert_eq!(ds.labels, vec![3, 9]);
        assert_eq!(ds.images.at2(0, 1), 128.0 / 255.0);
        let (img2, lbl2) = serialize_mnist_idx(&ds, 2, 2).unwrap();
        assert_eq!(img, img2);
        assert_eq!(lbl, lbl2);
    }

    #[test]
    fn idx_rejects_bad_magic_and_truncation_and_count_mismatch() {
        let (mut img, lbl) = tiny_fixture();
        img[3] = 0x99;
        match parse_mnist_idx(&img, &lbl) {
            Err(Error::Format(msg)) => assert!(msg.contains("0x00000899"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }

        let (img, lbl) = tiny_fixture();
        assert!(parse_mnist_idx(&img[..img.len() - 1], &lbl).is_err());

        let (img, mut lbl) = tiny_fixture();
        lbl[7] = 3; // claim 3 labels
        assert!(parse_mnist_idx(&img, &lbl).is_err());
    }

    #[test]
    fn synthetic_noiseless_is_exact_product() {
        let ds = make_linear_gaussian(10, 2, 4, 5, 0.0, 3).unwrap();
        let m = ds.effective_map().unwrap(); // [D, d]
        for i in 0..5 {
            for o in 0..10 {
                let mut acc = 0.0;
                for d in 0..2 {
                    acc += m.at2(o, d) * ds.phi_true.at2(i, d);
                }
                assert!((ds.psi.at2(i, o) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_validates_dims() {
        let a = make_linear_gaussian(10, 2, 4, 7, 0.1, 11).unwrap();
        let b = make_linear_gaussian(10, 2, 4, 7, 0.1, 11).unwrap();
        assert_eq!(a.psi, b.psi);
        assert_eq!(a.phi_true, b.phi_true);
        assert!(make_linear_gaussian(10, 5, 4, 7, 0.1, 11).is_err());
    }

    #[test]
    fn delta_dataset_dims_and_determinism() {
        let ds = make_delta_dataset(5);
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.content_dim(), 2);
        assert_eq!(ds.obs_dim(), 20);
        assert!(ds.tanh_nonlinearity);
        let again = make_delta_dataset(5);
        assert_eq!(ds.phi_true, again.phi_true);
        // phi_true ~ N(0, I): loose moment check
        assert!(ds.phi_true.mean().abs() < 0.1);
        assert!((ds.phi_true.variance() - 1.0).abs() < 0.1);
    }

    #[test]
    fn empty_grid_generation_any_density_zero() {
        let g = make_gridworld(1, 0.0).unwrap();
        assert!(g.occupancy().iter().all(|&o| !o));
        assert!(g.feasible());
    }

    #[test]
    fn generated_grids_pass_flood_fill() {
        for seed in 0..10 {
            let g = make_gridworld(seed, 0.3).unwrap();
            assert!(g.feasible(), "seed {seed}");
            assert_eq!(g.observation().len(), 1024);
        }
    }

    #[test]
    fn scenario_text_round_trip() {
        let g = make_gridworld(4, 0.25).unwrap();
        let text = g.to_text();
        let parsed = GridWorld::from_text(&text).unwrap();
        assert_eq!(parsed, g);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn scenario_rejects_malformed_input() {
        assert!(GridWorld::from_text("....\n").is_err());
        let g = make_gridworld(6, 0.2).unwrap();
        let text = g.to_text().replace('S', ".");
        assert!(GridWorld::from_text(&text).is_err());
    }

    proptest! {
        /// parse(serialize(ds)) == ds for random small valid datasets.
        #[test]
        fn idx_round_trip_property(
            n in 1usize..6,
            rows in 1usize..5,
            cols in 1usize..5,
            seed in 0u64..1000,
        ) {
            let mut rng = SeededRng::new(seed);
            let pixels: Vec<f64> = (0..n * rows * cols)
                .map(|_| (rng.below(256) as f64) / 255.0)
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.below(10)).collect();
            let ds = LabeledDataset::new(
                Tensor::new(vec![n, rows * cols], pixels).unwrap(),
                labels,
                "prop",
            )
            .unwrap();
            let (img, lbl) = serialize_mnist_idx(&ds, rows, cols).unwrap();
            let parsed = parse_mnist_idx(&img, &lbl).unwrap();
            prop_assert_eq!(parsed.images, ds.images);
            prop_assert_eq!(parsed.labels, ds.labels);
            let (img2, lbl2) = serialize_mnist_idx(&parsed, rows, cols).unwrap();
            prop_assert_eq!(img, img2);
            prop_assert_eq!(lbl, lbl2);
        }
    }
}
