//! Trajectory record produced by a training run.

use serde::{Deserialize, Serialize};

use crate::model::unit;
use crate::optimizer::StepSchedule;

/// Bit-packs the sign pattern of `w` (bit set ⇔ `w_j ≥ 0`), 64 coordinates per word.
pub fn pack_signs(w: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; w.len().div_ceil(64)];
    for (j, &x) in w.iter().enumerate() {
        if x >= 0.0 {
            out[j / 64] |= 1 << (j % 64);
        }
    }
    out
}

fn unpack_bit(words: &[u64], j: usize) -> bool {
    words[j / 64] >> (j % 64) & 1 == 1
}

/// Per-iteration distances, losses and sign history of one run, plus the
/// visit/escape events relative to `w_star`. Iteration `t` runs `1..=T`;
/// `t = 0` is the initial quantized point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    n: usize,
    w_star: Vec<f64>,
    schedule: StepSchedule,
    #[serde(with = "b64_words")]
    initial_signs: Vec<u64>,
    #[serde(with = "b64_words")]
    signs: Vec<u64>,
    hamming: Vec<u32>,
    dist_l2: Vec<f64>,
    loss: Vec<f64>,
    running_sum: Vec<f64>,
    visits: Vec<usize>,
    escapes: Vec<usize>,
}

impl RunRecord {
    /// Builds a record from an explicit sequence of quantized iterates `w¹..wᵀ`.
    /// Losses default to NaN when not supplied.
    pub fn from_iterates(
        w_star: &[f64],
        schedule: StepSchedule,
        w0: &[f64],
        iterates: &[Vec<f64>],
        losses: Option<&[f64]>,
    ) -> Self {
        let mut rec = RunRecorder::new(w_star, w0, schedule, iterates.len());
        for (t, w) in iterates.iter().enumerate() {
            rec.push(w, losses.map_or(f64::NAN, |l| l[t]));
        }
        rec.finish()
    }

    /// Number of recorded iterations `T`.
    pub fn len(&self) -> usize {
        self.hamming.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hamming.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    fn words(&self) -> usize {
        self.n.div_ceil(64)
    }

    fn signs_at(&self, t: usize) -> &[u64] {
        let k = self.words();
        if t == 0 {
            &self.initial_signs
        } else {
            &self.signs[(t - 1) * k..t * k]
        }
    }

    /// Whether coordinate `j` of `wᵗ` is positive (`t = 0` is the start point).
    pub fn positive(&self, t: usize, j: usize) -> bool {
        unpack_bit(self.signs_at(t), j)
    }

    pub fn w_at(&self, t: usize) -> Vec<f64> {
        let u = unit(self.n);
        (0..self.n)
            .map(|j| if self.positive(t, j) { u } else { -u })
            .collect()
    }

    pub fn hamming(&self) -> &[u32] {
        &self.hamming
    }

    pub fn dist_l2(&self) -> &[f64] {
        &self.dist_l2
    }

    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    /// `Σ_{t=1..T} wᵗ`.
    pub fn running_sum(&self) -> &[f64] {
        &self.running_sum
    }

    pub fn visits(&self) -> &[usize] {
        &self.visits
    }

    pub fn escapes(&self) -> &[usize] {
        &self.escapes
    }

    /// Packed sign words for every iteration `1..=T`, `ceil(n/64)` words each.
    pub fn packed_signs(&self) -> &[u64] {
        &self.signs
    }
}

/// Incremental builder for [`RunRecord`].
pub(crate) struct RunRecorder {
    rec: RunRecord,
    star_signs: Vec<u64>,
    at_star: bool,
}

impl RunRecorder {
    pub(crate) fn new(w_star: &[f64], w0: &[f64], schedule: StepSchedule, capacity: usize) -> Self {
        let n = w_star.len();
        let star_signs = pack_signs(w_star);
        let initial_signs = pack_signs(w0);
        let at_star = initial_signs == star_signs;
        let rec = RunRecord {
            n,
            w_star: w_star.to_vec(),
            schedule,
            initial_signs,
            signs: Vec::with_capacity(capacity * n.div_ceil(64)),
            hamming: Vec::with_capacity(capacity),
            dist_l2: Vec::with_capacity(capacity),
            loss: Vec::with_capacity(capacity),
            running_sum: vec![0.0; n],
            visits: if at_star { vec![0] } else { Vec::new() },
            escapes: Vec::new(),
        };
        Self {
            rec,
            star_signs,
            at_star,
        }
    }

    pub(crate) fn push(&mut self, w: &[f64], loss: f64) {
        let packed = pack_signs(w);
        let hamming: u32 = packed
            .iter()
            .zip(&self.star_signs)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        let dist = w
            .iter()
            .zip(&self.rec.w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        for (s, &x) in self.rec.running_sum.iter_mut().zip(w) {
            *s += x;
        }
        let t = self.rec.hamming.len() + 1;
        let now = hamming == 0;
        if now && !self.at_star {
            self.rec.visits.push(t);
        } else if !now && self.at_star {
            self.rec.escapes.push(t);
        }
        self.at_star = now;
        self.rec.signs.extend_from_slice(&packed);
        self.rec.hamming.push(hamming);
        self.rec.dist_l2.push(dist);
        self.rec.loss.push(loss);
    }

    pub(crate) fn finish(self) -> RunRecord {
        self.rec
    }
}

mod b64_words {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(words: &[u64], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(D::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(D::Error::custom(
                "packed sign data is not a whole number of words",
            ));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_handles_wide_vectors() {
        let w: Vec<f64> = (0..70)
            .map(|j| if j % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let p = pack_signs(&w);
        assert_eq!(p.len(), 2);
        for j in 0..70 {
            assert_eq!(unpack_bit(&p, j), j % 3 == 0);
        }
        assert_eq!(pack_signs(&[0.0]), vec![1]);
    }

    #[test]
    fn events_follow_definition() {
        let s = [0.5, 0.5, 0.5, 0.5];
        let o = [0.5, -0.5, 0.5, 0.5];
        let seq = vec![o.to_vec(), s.to_vec(), o.to_vec(), s.to_vec()];
        let r = RunRecord::from_iterates(&s, StepSchedule::default(), &o, &seq, None);
        assert_eq!(r.visits(), &[2, 4]);
        assert_eq!(r.escapes(), &[3]);
        assert_eq!(r.hamming(), &[1, 0, 1, 0]);
        assert_eq!(r.dist_l2()[0], 1.0);
        assert_eq!(r.w_at(2), s.to_vec());
        assert_eq!(r.w_at(0), o.to_vec());
    }

    #[test]
    fn starting_at_truth_counts_as_visit() {
        let s = [1.0];
        let seq = vec![vec![-1.0], vec![1.0]];
        let r = RunRecord::from_iterates(&s, StepSchedule::default(), &s, &seq, None);
        assert_eq!(r.visits(), &[0, 2]);
        assert_eq!(r.escapes(), &[1]);
    }

    #[test]
    fn json_round_trip() {
        let s = [0.5, -0.5, 0.5, 0.5];
        let seq = vec![vec![0.5; 4], s.to_vec()];
        let r = RunRecord::from_iterates(
            &s,
            StepSchedule::default(),
            &[0.5; 4],
            &seq,
            Some(&[0.25, 0.0]),
        );
        let text = serde_json::to_string(&r).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
