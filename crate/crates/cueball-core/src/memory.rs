//! The associative store: one cue neuron per stored pattern, two weight
//! rows per cue.
//!
//! Learning is a single gradient step in each direction. The forward row
//! `w` starts at `init_weight` and one step with unit cue activation moves
//! it onto the pattern itself. The backward row `v` starts at `init_weight`
//! and one step against the teacher signal `theta` scales it so the cue's
//! response to its own pattern lands on `theta`. Nothing iterates; the
//! returned report carries the residual errors proving one step sufficed,
//! and earlier rows are never touched again.
//!
//! Recall presents a probe to the recall net and reads each cue's response
//! `q = sum_j v_j * g_j`. A cue fires when `q` reaches the firing
//! threshold; with the threshold at the default 90 only near-exact matches
//! fire, and lowering it widens the net to similar patterns.
//!
//! Responses are accumulated left to right in index order so results are
//! reproducible bit for bit; parallelism only splits work across cues,
//! never inside one dot product.

use rayon::prelude::*;
use thiserror::Error;

use crate::idx::Pattern;
use crate::precision::Real;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("pattern has {actual} components, recall net expects {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("pattern is not normalized (squared norm {norm_sq})")]
    NotNormalized { norm_sq: f64 },
    #[error("cue {cue_id} already holds a memory")]
    AlreadyLearned { cue_id: u64 },
    #[error("cue {cue_id} is out of range (cue ball holds {capacity})")]
    IndexOutOfRange { cue_id: u64, capacity: usize },
    #[error("cue records must be strictly ascending by id (violated at position {position})")]
    UnsortedRecords { position: usize },
    #[error("cue {cue_id} has a row of {actual} components, expected {expected}")]
    RowLengthMismatch {
        cue_id: u64,
        expected: usize,
        actual: usize,
    },
    #[error("bad hyperparameters: {reason}")]
    BadHyperparams { reason: String },
}

/// Learning and recall constants. Kept in f64 regardless of kernel width;
/// kernels convert on entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Teacher signal a cue's self-response is driven to.
    pub theta: f64,
    /// Firing threshold on recall responses.
    pub threshold: f64,
    /// Step size for the forward (cue to recall net) row.
    pub eps_w: f64,
    /// Step size for the backward (recall net to cue) row.
    pub eps_v: f64,
    /// Both rows start at this value before their single step.
    pub init_weight: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            theta: 100.0,
            threshold: 90.0,
            eps_w: 1.0,
            eps_v: 1.0,
            init_weight: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let bad = |reason: String| Err(MemoryError::BadHyperparams { reason });
        for (name, v) in [
            ("theta", self.theta),
            ("threshold", self.threshold),
            ("eps_w", self.eps_w),
            ("eps_v", self.eps_v),
            ("init_weight", self.init_weight),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.theta <= 0.0 {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if self.threshold <= 0.0 || self.threshold > self.theta {
            return bad(format!(
                "threshold must lie in (0, theta={}], got {}",
                self.theta, self.threshold
            ));
        }
        if self.eps_w <= 0.0 || self.eps_v <= 0.0 {
            return bad(format!(
                "learning rates must be positive, got eps_w={} eps_v={}",
                self.eps_w, self.eps_v
            ));
        }
        Ok(())
    }
}

/// One cue neuron's learned state.
#[derive(Debug, Clone, PartialEq)]
pub struct CueRecord<F: Real> {
    pub cue_id: u64,
    /// Index of the source image in the set it was trained from.
    pub pattern_id: u64,
    /// Forward row; holds the stored pattern.
    pub w: Vec<F>,
    /// Backward row; tuned so the self-response equals theta.
    pub v: Vec<F>,
}

/// What one learning call did: how many steps each row took and the error
/// left afterwards. Steps are always 1; the residuals prove that was
/// enough.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnReport<F: Real> {
    pub cue_id: u64,
    pub pattern_id: u64,
    /// Gradient steps applied to the forward row.
    pub steps_w: usize,
    /// Gradient steps applied to the backward row.
    pub steps_v: usize,
    /// Halved squared distance between the driven net and the pattern,
    /// after the forward step.
    pub error_w: F,
    /// Halved squared distance between the self-response and theta, after
    /// the backward step.
    pub error_v: F,
    /// The cue's response to its own pattern, measured after both steps.
    pub self_response: F,
}

/// One cue's response to a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<F: Real> {
    pub cue_id: u64,
    pub q: F,
}

pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for j in 0..a.len() {
        acc += a[j] * b[j];
    }
    acc
}

// Descending by response, ascending cue id on ties.
fn by_response_desc<F: Real>(a: &Candidate<F>, b: &Candidate<F>) -> std::cmp::Ordering {
    b.q.as_f64()
        .total_cmp(&a.q.as_f64())
        .then(a.cue_id.cmp(&b.cue_id))
}

/// Cue responses to one probe, in cue id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<F: Real> {
    probe_id: Option<u64>,
    responses: Vec<Candidate<F>>,
}

impl<F: Real> Spectrum<F> {
    /// Assembles a spectrum from precomputed responses.
    pub fn from_responses(mut responses: Vec<Candidate<F>>) -> Self {
        responses.sort_by_key(|c| c.cue_id);
        Spectrum {
            probe_id: None,
            responses,
        }
    }

    /// Tags the spectrum with the probe pattern's identity, for labeling
    /// exported data.
    pub fn with_probe_id(mut self, probe_id: u64) -> Self {
        self.probe_id = Some(probe_id);
        self
    }

    pub fn probe_id(&self) -> Option<u64> {
        self.probe_id
    }

    pub fn responses(&self) -> &[Candidate<F>] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Cues whose response reaches `threshold` (the boundary fires),
    /// strongest first, ties by ascending cue id.
    pub fn fire(&self, threshold: f64) -> Vec<Candidate<F>> {
        let mut fired: Vec<Candidate<F>> = self
            .responses
            .iter()
            .filter(|c| c.q.as_f64() >= threshold)
            .copied()
            .collect();
        fired.sort_by(by_response_desc);
        fired
    }

    /// The strongest response; lowest cue id on an exact tie.
    pub fn peak(&self) -> Option<&Candidate<F>> {
        // Cue ids are unique, so the comparator never returns Equal and
        // min_by's last-wins rule cannot bite.
        self.responses.iter().min_by(|a, b| by_response_desc(a, b))
    }
}

/// One fired cue with its readout.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallEntry<F: Real> {
    pub cue_id: u64,
    pub q: F,
    /// The pattern the cue reconstructs, read from its forward row.
    pub reconstruction: Pattern<F>,
}

/// Outcome of a threshold-gated recall: the cues that fired, strongest
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallResult<F: Real> {
    pub threshold: f64,
    pub fired: Vec<RecallEntry<F>>,
}

impl<F: Real> RecallResult<F> {
    pub fn peak(&self) -> Option<&RecallEntry<F>> {
        self.fired.first()
    }
}

/// The cue ball plus recall net.
#[derive(Debug, Clone)]
pub struct MemoryStore<F: Real> {
    params: Hyperparams,
    recall_size: usize,
    cue_capacity: usize,
    // Strictly ascending by cue_id; holds learned cues only. An unlearned
    // cue neuron is all init weights, so it is never materialized: its
    // response to any probe is init_weight times the probe's component
    // sum, which for a normalized probe is bounded by sqrt(recall_size),
    // far under any useful threshold.
    records: Vec<CueRecord<F>>,
}

impl<F: Real> MemoryStore<F> {
    /// A store with `cue_capacity` unlearned cue neurons.
    pub fn new(recall_size: usize, cue_capacity: usize, params: Hyperparams) -> Self {
        MemoryStore {
            params,
            recall_size,
            cue_capacity,
            records: Vec::new(),
        }
    }

    /// Rebuilds a store from deserialized rows, checking the shape
    /// invariants the learn path maintains.
    pub fn from_parts(
        params: Hyperparams,
        recall_size: usize,
        cue_capacity: usize,
        records: Vec<CueRecord<F>>,
    ) -> Result<Self, MemoryError> {
        for (i, rec) in records.iter().enumerate() {
            if i > 0 && records[i - 1].cue_id >= rec.cue_id {
                return Err(MemoryError::UnsortedRecords { position: i });
            }
            if rec.cue_id >= cue_capacity as u64 {
                return Err(MemoryError::IndexOutOfRange {
                    cue_id: rec.cue_id,
                    capacity: cue_capacity,
                });
            }
            for row in [&rec.w, &rec.v] {
                if row.len() != recall_size {
                    return Err(MemoryError::RowLengthMismatch {
                        cue_id: rec.cue_id,
                        expected: recall_size,
                        actual: row.len(),
                    });
                }
            }
        }
        Ok(MemoryStore {
            params,
            recall_size,
            cue_capacity,
            records,
        })
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn recall_size(&self) -> usize {
        self.recall_size
    }

    pub fn cue_capacity(&self) -> usize {
        self.cue_capacity
    }

    pub fn learned_count(&self) -> usize {
        self.records.len()
    }

    /// Learned cue records, ascending by cue id.
    pub fn records(&self) -> &[CueRecord<F>] {
        &self.records
    }

    pub fn record(&self, cue_id: u64) -> Option<&CueRecord<F>> {
        self.records
            .binary_search_by_key(&cue_id, |r| r.cue_id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn is_learned(&self, cue_id: u64) -> bool {
        self.record(cue_id).is_some()
    }

    /// Stores one normalized pattern on the unlearned cue neuron `cue_id`.
    ///
    /// The whole update is two single gradient steps. With unit cue
    /// activation the forward step lands `w` on the pattern, and the
    /// backward step scales `v` so the measured self-response comes out at
    /// `theta`:
    ///
    /// 1. start `w` at `init_weight`, drive the recall net once, and step
    ///    each component by `eps_w * (target - output) * activation`;
    /// 2. start `v` at `init_weight`, read the cue's response to the
    ///    freshly driven net, and step each component by
    ///    `eps_v * (theta - response) * output`.
    ///
    /// Storing is additive: no other cue's rows are touched.
    pub fn learn(
        &mut self,
        cue_id: u64,
        pattern_id: u64,
        pattern: &Pattern<F>,
    ) -> Result<LearnReport<F>, MemoryError> {
        if pattern.len() != self.recall_size {
            return Err(MemoryError::SizeMismatch {
                expected: self.recall_size,
                actual: pattern.len(),
            });
        }
        if !pattern.is_normalized() {
            return Err(MemoryError::NotNormalized {
                norm_sq: pattern.norm_sq(),
            });
        }
        if cue_id >= self.cue_capacity as u64 {
            return Err(MemoryError::IndexOutOfRange {
                cue_id,
                capacity: self.cue_capacity,
            });
        }
        let slot = match self.records.binary_search_by_key(&cue_id, |r| r.cue_id) {
            Ok(_) => return Err(MemoryError::AlreadyLearned { cue_id }),
            Err(slot) => slot,
        };

        let d = pattern.values();
        let x = F::one(); // the cue neuron's activation while its pattern is taught
        let theta = F::of(self.params.theta);
        let eps_w = F::of(self.params.eps_w);
        let eps_v = F::of(self.params.eps_v);
        let init = F::of(self.params.init_weight);
        let half = F::of(0.5);

        let mut w = vec![init; self.recall_size];
        let mut y = vec![F::zero(); self.recall_size];
        for j in 0..self.recall_size {
            y[j] = w[j] * x;
            w[j] += eps_w * (d[j] - y[j]) * x;
            y[j] = w[j] * x;
        }
        let mut error_w = F::zero();
        for j in 0..self.recall_size {
            let r = d[j] - y[j];
            error_w += half * r * r;
        }

        let mut v = vec![init; self.recall_size];
        let q0 = dot(&v, &y);
        for j in 0..self.recall_size {
            v[j] += eps_v * (theta - q0) * y[j];
        }
        let self_response = dot(&v, &y);
        let residual = theta - self_response;
        let error_v = half * residual * residual;

        self.records.insert(
            slot,
            CueRecord {
                cue_id,
                pattern_id,
                w,
                v,
            },
        );
        Ok(LearnReport {
            cue_id,
            pattern_id,
            steps_w: 1,
            steps_v: 1,
            error_w,
            error_v,
            self_response,
        })
    }

    /// Every learned cue's response to `probe`. Work is split across cues;
    /// each response is one sequential dot product, so the result is
    /// bit-reproducible. The probe need not be normalized.
    pub fn respond(&self, probe: &[F]) -> Result<Spectrum<F>, MemoryError> {
        if probe.len() != self.recall_size {
            return Err(MemoryError::SizeMismatch {
                expected: self.recall_size,
                actual: probe.len(),
            });
        }
        let responses = self
            .records
            .par_iter()
            .map(|rec| Candidate {
                cue_id: rec.cue_id,
                q: dot(&rec.v, probe),
            })
            .collect();
        Ok(Spectrum {
            probe_id: None,
            responses,
        })
    }

    /// Like [`respond`](Self::respond) but covering every cue neuron up to
    /// capacity. An unlearned cue's backward row is uniformly
    /// `init_weight`, so all unlearned cues share one response:
    /// `init_weight` times the probe's component sum.
    pub fn respond_including_unlearned(&self, probe: &[F]) -> Result<Spectrum<F>, MemoryError> {
        let learned = self.respond(probe)?;
        let unlearned_q = F::of(self.params.init_weight) * probe.iter().copied().sum();
        let mut responses = Vec::with_capacity(self.cue_capacity);
        let mut next = learned.responses.iter().peekable();
        for cue_id in 0..self.cue_capacity as u64 {
            match next.peek() {
                Some(c) if c.cue_id == cue_id => responses.push(*next.next().unwrap()),
                _ => responses.push(Candidate {
                    cue_id,
                    q: unlearned_q,
                }),
            }
        }
        Ok(Spectrum {
            probe_id: None,
            responses,
        })
    }

    /// Responds to `probe`, keeps the cues that reach `threshold`, and
    /// attaches each one's reconstruction, strongest first.
    pub fn recall(&self, probe: &[F], threshold: f64) -> Result<RecallResult<F>, MemoryError> {
        let spectrum = self.respond(probe)?;
        let fired = spectrum
            .fire(threshold)
            .into_iter()
            .map(|c| {
                let reconstruction = self.reconstruct(c.cue_id).expect("fired cue exists");
                RecallEntry {
                    cue_id: c.cue_id,
                    q: c.q,
                    reconstruction,
                }
            })
            .collect();
        Ok(RecallResult { threshold, fired })
    }

    /// The pattern a cue neuron reproduces when it fires: its forward row
    /// driven by unit activation. For a learned cue that is the stored
    /// pattern; for an unlearned cue it is the flat init-weight vector,
    /// flagged probe-only.
    pub fn reconstruct(&self, cue_id: u64) -> Result<Pattern<F>, MemoryError> {
        if cue_id >= self.cue_capacity as u64 {
            return Err(MemoryError::IndexOutOfRange {
                cue_id,
                capacity: self.cue_capacity,
            });
        }
        Ok(match self.record(cue_id) {
            Some(rec) => Pattern::reconstructed(rec.w.clone(), false),
            None => {
                Pattern::reconstructed(vec![F::of(self.params.init_weight); self.recall_size], true)
            }
        })
    }
}

/// Algebraic prediction of a learned cue's response, derived by
/// substituting the closed forms of the two weight rows: with `S_p` the
/// stored pattern's component sum and `S_g` the probe's,
/// `q = S_g + (theta - S_p) * <d, g>`. Computed in f64; used as an
/// independent cross-check on the kernel.
pub fn closed_form_response(stored: &[f64], probe: &[f64], theta: f64) -> f64 {
    assert_eq!(stored.len(), probe.len());
    let s_p: f64 = stored.iter().sum();
    let s_g: f64 = probe.iter().sum();
    let dp: f64 = stored.iter().zip(probe).map(|(d, g)| d * g).sum();
    s_g + (theta - s_p) * dp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idx::normalize;
    use proptest::prelude::*;

    fn store_345() -> (MemoryStore<f64>, Pattern<f64>) {
        let mut store = MemoryStore::new(2, 16, Hyperparams::default());
        let p = normalize(&[3, 4]).unwrap();
        store.learn(0, 0, &p).unwrap();
        (store, p)
    }

    fn basis_pattern(len: usize, index: usize) -> Pattern<f64> {
        let mut raw = vec![0u8; len];
        raw[index] = 255;
        normalize(&raw).unwrap()
    }

    #[test]
    fn learn_lands_w_on_the_pattern() {
        let (store, p) = store_345();
        let rec = store.record(0).unwrap();
        for j in 0..2 {
            // One step from 1.0 costs two roundings, so not always bit-exact.
            assert!((rec.w[j] - p.values()[j]).abs() <= 1e-15);
        }
    }

    #[test]
    fn learn_scales_v_to_the_teacher_signal() {
        let (store, _) = store_345();
        let rec = store.record(0).unwrap();
        // v_j = 1 + (theta - S_p) * d_j with S_p = 1.4.
        assert!((rec.v[0] - 60.16).abs() < 1e-12);
        assert!((rec.v[1] - 79.88).abs() < 1e-12);
    }

    #[test]
    fn basis_pattern_learns_exactly() {
        // Pattern with a single unit component: every arithmetic step is
        // exact, so the published closed forms appear verbatim.
        let mut store = MemoryStore::new(4, 8, Hyperparams::default());
        let p = basis_pattern(4, 0);
        let report = store.learn(0, 0, &p).unwrap();
        let rec = store.record(0).unwrap();
        assert_eq!(rec.w, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rec.v, vec![100.0, 1.0, 1.0, 1.0]);
        assert_eq!(report.self_response, 100.0);
        assert_eq!(report.error_w, 0.0);
        assert_eq!(report.error_v, 0.0);
        assert_eq!((report.steps_w, report.steps_v), (1, 1));
        // Probing with a different basis vector reads the untouched init
        // weight back out of v.
        let q = store.respond(basis_pattern(4, 1).values()).unwrap();
        assert_eq!(q.responses()[0].q, 1.0);
    }

    #[test]
    fn one_step_leaves_negligible_residuals() {
        let mut store: MemoryStore<f64> = MemoryStore::new(3, 8, Hyperparams::default());
        let report = store
            .learn(0, 0, &normalize(&[10, 200, 31]).unwrap())
            .unwrap();
        assert!(report.error_w < 1e-18, "error_w = {:e}", report.error_w);
        assert!(report.error_v < 1e-18, "error_v = {:e}", report.error_v);
        assert!((report.self_response - 100.0).abs() < 1e-9);
    }

    #[test]
    fn respond_matches_the_closed_form() {
        let (store, p) = store_345();
        let probe = [1.0, 0.0];
        let q = store.respond(&probe).unwrap().responses()[0].q;
        let predicted = closed_form_response(p.values(), &probe, 100.0);
        assert!((predicted - 60.16).abs() < 1e-12);
        assert!((q - predicted).abs() < 1e-12);
    }

    #[test]
    fn zero_probe_yields_zero_responses() {
        let (store, _) = store_345();
        let q = store.respond(&[0.0, 0.0]).unwrap();
        assert_eq!(q.responses()[0].q, 0.0);
    }

    #[test]
    fn shape_and_state_errors() {
        let mut store: MemoryStore<f64> = MemoryStore::new(2, 2, Hyperparams::default());
        assert!(matches!(
            store.learn(0, 0, &normalize(&[1, 2, 3]).unwrap()),
            Err(MemoryError::SizeMismatch {
                expected: 2,
                actual: 3
            })
        ));
        assert!(matches!(
            store.learn(0, 0, &Pattern::from_values(vec![3.0, 4.0])),
            Err(MemoryError::NotNormalized { .. })
        ));
        store.learn(0, 0, &normalize(&[3, 4]).unwrap()).unwrap();
        assert!(matches!(
            store.learn(0, 1, &normalize(&[4, 3]).unwrap()),
            Err(MemoryError::AlreadyLearned { cue_id: 0 })
        ));
        assert!(matches!(
            store.learn(2, 2, &normalize(&[4, 3]).unwrap()),
            Err(MemoryError::IndexOutOfRange {
                cue_id: 2,
                capacity: 2
            })
        ));
        assert!(matches!(
            store.respond(&[1.0]),
            Err(MemoryError::SizeMismatch { .. })
        ));
        assert!(matches!(
            store.reconstruct(9),
            Err(MemoryError::IndexOutOfRange { cue_id: 9, .. })
        ));
    }

    #[test]
    fn learning_out_of_order_keeps_records_sorted() {
        let mut store: MemoryStore<f64> = MemoryStore::new(2, 16, Hyperparams::default());
        for cue_id in [5u64, 1, 9, 3] {
            store
                .learn(cue_id, cue_id, &normalize(&[3, 4]).unwrap())
                .unwrap();
        }
        let ids: Vec<u64> = store.records().iter().map(|r| r.cue_id).collect();
        assert_eq!(ids, vec![1, 3, 5, 9]);
        assert!(store.is_learned(9));
        assert!(!store.is_learned(0));
    }

    #[test]
    fn later_learning_leaves_earlier_rows_bit_identical() {
        let mut store: MemoryStore<f64> = MemoryStore::new(3, 16, Hyperparams::default());
        store.learn(0, 0, &normalize(&[1, 2, 3]).unwrap()).unwrap();
        let before: Vec<u64> = {
            let r = store.record(0).unwrap();
            r.w.iter().chain(&r.v).map(|x| x.bits()).collect()
        };
        for (id, raw) in [[9u8, 9, 1], [200, 0, 13], [5, 5, 5]].iter().enumerate() {
            let id = id as u64 + 1;
            store.learn(id, id, &normalize(raw).unwrap()).unwrap();
        }
        let after: Vec<u64> = {
            let r = store.record(0).unwrap();
            r.w.iter().chain(&r.v).map(|x| x.bits()).collect()
        };
        assert_eq!(before, after);
    }

    #[test]
    fn recall_orders_candidates_strongest_first() {
        let mut store = MemoryStore::new(4, 16, Hyperparams::default());
        for (id, raw) in [[10u8, 0, 0, 1], [0, 10, 1, 0], [10, 1, 0, 0]]
            .iter()
            .enumerate()
        {
            store
                .learn(id as u64, id as u64, &normalize(raw).unwrap())
                .unwrap();
        }
        let probe = normalize::<f64>(&[10, 0, 0, 1]).unwrap();
        let result = store.recall(probe.values(), 50.0).unwrap();
        let peak = result.peak().unwrap();
        assert_eq!(peak.cue_id, 0);
        assert!((peak.q - 100.0).abs() < 1e-9);
        // The attached reconstruction is the fired cue's forward row.
        assert_eq!(
            peak.reconstruction.values(),
            &store.record(0).unwrap().w[..]
        );
        for pair in result.fired.windows(2) {
            assert!(pair[0].q >= pair[1].q);
        }
        // An orthogonal-ish probe fires nothing at the default threshold.
        let far = store
            .recall(normalize::<f64>(&[0, 0, 1, 0]).unwrap().values(), 90.0)
            .unwrap();
        assert!(far.fired.is_empty());
        assert_eq!(far.peak(), None);
    }

    #[test]
    fn reconstruct_covers_unlearned_cues() {
        let (store, _) = store_345();
        let learned = store.reconstruct(0).unwrap();
        assert!(!learned.probe_only());
        assert!(learned.is_normalized());
        let blank = store.reconstruct(7).unwrap();
        assert_eq!(blank.values(), &[1.0, 1.0]);
        assert!(blank.probe_only());
    }

    #[test]
    fn respond_including_unlearned_fills_the_cue_ball() {
        let mut store: MemoryStore<f64> = MemoryStore::new(2, 5, Hyperparams::default());
        store.learn(2, 2, &normalize(&[3, 4]).unwrap()).unwrap();
        let probe = [0.5, 0.25];
        let s = store.respond_including_unlearned(&probe).unwrap();
        assert_eq!(s.len(), 5);
        for c in s.responses() {
            if c.cue_id == 2 {
                assert!((c.q - (0.5 * 60.16 + 0.25 * 79.88)).abs() < 1e-9);
            } else {
                // init_weight * (probe component sum)
                assert_eq!(c.q, 0.75);
            }
        }
    }

    #[test]
    fn boundary_response_fires_and_peak_breaks_ties_low() {
        let mk = |cue_id, q| Candidate::<f64> { cue_id, q };
        let spectrum = Spectrum::from_responses(vec![mk(2, 90.0), mk(0, 89.999), mk(1, 90.0)]);
        let fired = spectrum.fire(90.0);
        assert_eq!(
            fired.iter().map(|c| c.cue_id).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert_eq!(spectrum.peak().unwrap().cue_id, 1);
        assert!(spectrum.fire(90.0001).is_empty());
        assert!(Spectrum::<f64>::from_responses(vec![]).peak().is_none());
    }

    #[test]
    fn respond_is_bit_deterministic_across_runs() {
        let mut store = MemoryStore::new(8, 64, Hyperparams::default());
        for id in 0..32u64 {
            let raw: Vec<u8> = (0..8)
                .map(|j| ((id * 37 + j * 11) % 251 + 1) as u8)
                .collect();
            store.learn(id, id, &normalize(&raw).unwrap()).unwrap();
        }
        let probe = normalize::<f64>(&[1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let a = store.respond(probe.values()).unwrap();
        let b = store.respond(probe.values()).unwrap();
        let bits = |s: &Spectrum<f64>| -> Vec<u64> {
            s.responses().iter().map(|c| c.q.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn from_parts_checks_shape_invariants() {
        let rec = |cue_id| CueRecord::<f64> {
            cue_id,
            pattern_id: cue_id,
            w: vec![0.0; 2],
            v: vec![0.0; 2],
        };
        let params = Hyperparams::default();
        assert!(MemoryStore::from_parts(params, 2, 8, vec![rec(0), rec(3)]).is_ok());
        assert!(matches!(
            MemoryStore::from_parts(params, 2, 8, vec![rec(3), rec(3)]),
            Err(MemoryError::UnsortedRecords { position: 1 })
        ));
        assert!(matches!(
            MemoryStore::from_parts(params, 2, 2, vec![rec(0), rec(5)]),
            Err(MemoryError::IndexOutOfRange { cue_id: 5, .. })
        ));
        let mut bad = rec(0);
        bad.w.push(0.0);
        assert!(matches!(
            MemoryStore::from_parts(params, 2, 8, vec![bad]),
            Err(MemoryError::RowLengthMismatch { cue_id: 0, .. })
        ));
    }

    #[test]
    fn hyperparams_are_validated() {
        assert!(Hyperparams::default().validate().is_ok());
        let cases = [
            Hyperparams {
                theta: 0.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                threshold: 0.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                threshold: 101.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                eps_w: -1.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                eps_v: 0.0,
                ..Hyperparams::default()
            },
            Hyperparams {
                theta: f64::NAN,
                ..Hyperparams::default()
            },
        ];
        for params in cases {
            assert!(
                matches!(params.validate(), Err(MemoryError::BadHyperparams { .. })),
                "{params:?} should be rejected"
            );
        }
    }

    proptest! {
        #[test]
        fn response_is_linear_in_the_probe(
            raws in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 6), 1..5),
            g1 in proptest::collection::vec(-1.0f64..1.0, 6),
            g2 in proptest::collection::vec(-1.0f64..1.0, 6),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let mut store = MemoryStore::new(6, 16, Hyperparams::default());
            for (id, raw) in raws.iter().enumerate() {
                prop_assume!(raw.iter().any(|&p| p > 0));
                store.learn(id as u64, id as u64, &normalize(raw).unwrap()).unwrap();
            }
            let mixed: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| alpha * a + beta * b).collect();
            let qa = store.respond(&g1).unwrap();
            let qb = store.respond(&g2).unwrap();
            let qm = store.respond(&mixed).unwrap();
            for i in 0..store.learned_count() {
                let lhs = alpha * qa.responses()[i].q + beta * qb.responses()[i].q;
                prop_assert!((lhs - qm.responses()[i].q).abs() < 1e-9,
                    "cue {}: {} vs {}", i, lhs, qm.responses()[i].q);
            }
        }

        #[test]
        fn respond_always_matches_the_closed_form(
            raw in proptest::collection::vec(any::<u8>(), 10),
            probe_raw in proptest::collection::vec(any::<u8>(), 10),
        ) {
            prop_assume!(raw.iter().any(|&p| p > 0));
            prop_assume!(probe_raw.iter().any(|&p| p > 0));
            let mut store = MemoryStore::new(10, 4, Hyperparams::default());
            let stored: Pattern<f64> = normalize(&raw).unwrap();
            store.learn(0, 0, &stored).unwrap();
            let probe: Pattern<f64> = normalize(&probe_raw).unwrap();
            let q = store.respond(probe.values()).unwrap().responses()[0].q;
            let predicted = closed_form_response(stored.values(), probe.values(), 100.0);
            prop_assert!((q - predicted).abs() < 1e-9, "{} vs {}", q, predicted);
        }

        #[test]
        fn fire_is_monotone_in_the_threshold(
            qs in proptest::collection::vec(0.0f64..120.0, 0..24),
            h1 in 0.0f64..120.0,
            h2 in 0.0f64..120.0,
        ) {
            let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
            let spectrum = Spectrum::from_responses(
                qs.iter().enumerate().map(|(i, &q)| Candidate { cue_id: i as u64, q }).collect(),
            );
            let at_hi: Vec<u64> = spectrum.fire(hi).iter().map(|c| c.cue_id).collect();
            let at_lo: Vec<u64> = spectrum.fire(lo).iter().map(|c| c.cue_id).collect();
            for id in &at_hi {
                prop_assert!(at_lo.contains(id), "cue {} fired at {} but not at {}", id, hi, lo);
            }
            // Boundary semantics: a response exactly at the threshold fires.
            for (i, &q) in qs.iter().enumerate() {
                prop_assert_eq!(at_lo.contains(&(i as u64)), q >= lo);
            }
        }
    }
}
