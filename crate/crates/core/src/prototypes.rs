//! Per-category streaming k-means over latent codes.
//!
//! Centers update with a per-center learning rate of one over its lifetime
//! assignment count, so a center that only ever receives one stream of
//! points is exactly their running mean.

use crate::autoencoder::LatentBatch;
use crate::dataio::Checkpoint;
use crate::error::{Error, Result};
use crate::numerics::{kernels, StreamRng, Tensor};

/// Cluster centers for one category with lifetime assignment counts.
#[derive(Debug, Clone)]
pub struct KMeansState {
    /// `[C][d]`
    pub centers: Vec<Vec<f64>>,
    /// Assignment events routed to each center since initialization.
    pub counts: Vec<u64>,
}

impl KMeansState {
    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, |c| c.len())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub centers_per_category: usize,
    pub passes: usize,
    pub batch_size: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { centers_per_category: 10, passes: 5, batch_size: 64 }
    }
}

/// Initialize centers as `c` distinct points sampled without replacement.
pub fn init_centers(points: &[Vec<f64>], c: usize, rng: &mut StreamRng) -> Result<KMeansState> {
    if c == 0 || c > points.len() {
        return Err(Error::InvalidArgument {
            op: "init_centers",
            msg: format!("{} centers requested from {} point(s)", c, points.len()),
        });
    }
    let chosen = rng.sample_without_replacement(points.len(), c);
    let centers = chosen.iter().map(|&i| points[i].clone()).collect();
    Ok(KMeansState { centers, counts: vec![0; c] })
}

/// Index of the nearest center by squared Euclidean distance; ties break to
/// the lowest index.
pub fn assign(state: &KMeansState, z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = kernels::squared_distance(&state.centers[0], z);
    for (i, center) in state.centers.iter().enumerate().skip(1) {
        let d = kernels::squared_distance(center, z);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Route `z` to center `c_star`: bump its count, then take the convex step
/// with learning rate `1 / count`.
pub fn update(state: &mut KMeansState, c_star: usize, z: &[f64]) {
    state.counts[c_star] += 1;
    let eta = 1.0 / state.counts[c_star] as f64;
    for (cv, &zv) in state.centers[c_star].iter_mut().zip(z) {
        *cv = (1.0 - eta) * *cv + eta * zv;
    }
}

/// Fit one category's centers by streaming shuffled minibatches.
///
/// Centers left empty after all passes are reseeded to the points farthest
/// from their assigned centers, followed by one extra pass (at most once).
pub fn fit_category(points: &[Vec<f64>], config: &KMeansConfig, rng: &mut StreamRng) -> Result<KMeansState> {
    let mut init_rng = rng.substream("init");
    let mut state = init_centers(points, config.centers_per_category, &mut init_rng)?;
    let mut shuffle_rng = rng.substream("shuffle");
    let passes = config.passes.max(1);
    let batch = config.batch_size.max(1);

    let run_pass = |state: &mut KMeansState, shuffle_rng: &mut StreamRng| {
        let mut order: Vec<usize> = (0..points.len()).collect();
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            for &i in chunk {
                let c_star = assign(state, &points[i]);
                update(state, c_star, &points[i]);
            }
        }
    };

    for _ in 0..passes {
        run_pass(&mut state, &mut shuffle_rng);
    }

    if state.counts.contains(&0) {
        reseed_empty_centers(&mut state, points);
        run_pass(&mut state, &mut shuffle_rng);
    }
    Ok(state)
}

/// Move empty centers onto the points currently farthest from their assigned
/// centers (distinct points, in falling distance order).
fn reseed_empty_centers(state: &mut KMeansState, points: &[Vec<f64>]) {
    let mut by_distance: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = assign(state, p);
            (kernels::squared_distance(&state.centers[c], p), i)
        })
        .collect();
    by_distance.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let empty: Vec<usize> = (0..state.counts.len()).filter(|&c| state.counts[c] == 0).collect();
    for (slot, center_idx) in empty.into_iter().enumerate() {
        if let Some(&(_, point_idx)) = by_distance.get(slot) {
            state.centers[center_idx] = points[point_idx].clone();
        }
    }
}

/// All categories' prototypes, each tagged with its category.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    /// One fitted state per category, indexed by category.
    pub states: Vec<KMeansState>,
}

impl PrototypeSet {
    pub fn num_categories(&self) -> usize {
        self.states.len()
    }

    pub fn centers_per_category(&self) -> usize {
        self.states.first().map_or(0, |s| s.num_centers())
    }

    pub fn latent_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.dim())
    }

    pub fn prototype(&self, category: usize, index: usize) -> &[f64] {
        &self.states[category].centers[index]
    }

    /// Total prototype count `K * C`.
    pub fn len(&self) -> usize {
        self.states.iter().map(|s| s.num_centers()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new();
        for (cat, state) in self.states.iter().enumerate() {
            for (idx, center) in state.centers.iter().enumerate() {
                ckpt.insert(
                    &format!("proto.{cat}.{idx}"),
                    &Tensor::new(vec![center.len()], center.clone())?,
                )?;
            }
            let counts: Vec<f64> = state.counts.iter().map(|&c| c as f64).collect();
            ckpt.insert(&format!("proto.{cat}.counts"), &Tensor::new(vec![counts.len()], counts)?)?;
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut states = Vec::new();
        for cat in 0.. {
            let counts_name = format!("proto.{cat}.counts");
            if ckpt.get(&counts_name).is_none() {
                break;
            }
            let counts: Vec<u64> = ckpt.get_tensor(&counts_name)?.data.iter().map(|&v| v as u64).collect();
            let mut centers = Vec::with_capacity(counts.len());
            for idx in 0..counts.len() {
                centers.push(ckpt.get_tensor(&format!("proto.{cat}.{idx}"))?.data);
            }
            states.push(KMeansState { centers, counts });
        }
        if states.is_empty() {
            return Err(Error::InvalidArgument {
                op: "PrototypeSet::from_checkpoint",
                msg: "no prototype tensors found".into(),
            });
        }
        Ok(PrototypeSet { states })
    }
}

/// Fit every category independently (per-category substreams, so processing
/// order cannot matter) and collect the prototypes.
pub fn learn_prototypes(latents: &LatentBatch, config: &KMeansConfig, seed: u64) -> Result<PrototypeSet> {
    let root = StreamRng::new(seed).substream("kmeans");
    let mut states = Vec::with_capacity(latents.num_categories);
    for cat in 0..latents.num_categories {
        let rows = latents.indices_of(cat);
        if rows.len() < config.centers_per_category {
            return Err(Error::UndersizedCategory {
                category: cat,
                available: rows.len(),
                requested: config.centers_per_category,
            });
        }
        let points: Vec<Vec<f64>> = rows.iter().map(|&i| latents.latents.row(i).to_vec()).collect();
        let mut cat_rng = root.substream(&format!("cat{cat}"));
        states.push(fit_category(&points, config, &mut cat_rng)?);
    }
    Ok(PrototypeSet { states })
}
