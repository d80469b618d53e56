//! Binary model container.
//!
//! All integers are little-endian. Layout, version 1:
//!
//! ```text
//! magic        8 bytes  "KGRXCKPT"
//! version      u32
//! config       str                      (JSON echo of the run configuration)
//! entities     u32 count, str × count   (frozen entity vocabulary, id order)
//! relations    u32 count, str × count
//! triples      u64 count, (u32 h, u32 r, u32 t, u8 provenance rank) × count
//! arch         u32 dim, u32 layers, u32 blocks, u8 activation,
//!              u8 output activation, u8 inverse edges, u8 use encoder
//! matrices     u32 count, matrix × count (embeddings, relation diagonals,
//!              then per layer self-loop and relation weights)
//! scorer       u8 present; if 1: u32 count, str × count (relations),
//!              u32 count, str × count (entity types), u32 depth,
//!              u32 hidden, u32 count, matrix × count
//! checksum     u64 FNV-1a of every preceding byte
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8; `matrix` is u32 rows,
//! u32 cols, then `rows · cols` f32 values in row-major order.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Provenance, RelationId, Triple, Vocab};
use crate::linkpred::{Activation, Architecture, ModelParams};
use crate::reasoning::{FeatureSpace, ReasoningScorer};

pub const MAGIC: &[u8; 8] = b"KGRXCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub graph: KnowledgeGraph,
    pub params: ModelParams,
    pub scorer: Option<ReasoningScorer>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn strs<S: AsRef<str>>(&mut self, items: &[S]) {
        self.u32(items.len());
        for s in items {
            self.str(s.as_ref());
        }
    }
    fn matrix(&mut self, m: &Array2<f64>) {
        self.u32(m.nrows());
        self.u32(m.ncols());
        for &v in m.iter() {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(message: impl Into<String>) -> Error {
    Error::Checkpoint(message.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    /// Rejects counts that cannot fit in the remaining input.
    fn count(&mut self, n: usize, min_item: usize, what: &str) -> Result<usize> {
        if n.saturating_mul(min_item) > self.bytes.len() - self.pos {
            return Err(corrupt(format!("{what} count {n} exceeds the remaining input")));
        }
        Ok(n)
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt(format!("{what} is not UTF-8")))
    }
    fn strs(&mut self, what: &str) -> Result<Vec<String>> {
        let n = self.u32(what)?;
        let n = self.count(n, 4, what)?;
        (0..n).map(|_| self.str(what)).collect()
    }
    fn matrix(&mut self, what: &str) -> Result<Array2<f64>> {
        let rows = self.u32(what)?;
        let cols = self.u32(what)?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| corrupt(format!("{what} shape {rows}×{cols} overflows")))?;
        let n = self.count(n, 4, what)?;
        let data = self.take(n * 4, what)?;
        let values = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
    }
    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(corrupt(format!("{what} flag {v} is not 0 or 1"))),
        }
    }
    fn activation(&mut self, what: &str) -> Result<Activation> {
        match self.u8(what)? {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Identity),
            v => Err(corrupt(format!("unknown {what} code {v}"))),
        }
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        w.str(&self.config);
        w.strs(self.graph.entities().names());
        w.strs(self.graph.relations().names());
        w.u64(self.graph.len() as u64);
        for t in self.graph.triples() {
            w.u32(t.head.index());
            w.u32(t.relation.index());
            w.u32(t.tail.index());
            w.u8(t.provenance.rank());
        }
        let a = &self.params.arch;
        w.u32(a.dim);
        w.u32(a.layers);
        w.u32(a.blocks);
        w.u8(activation_code(a.activation));
        w.u8(activation_code(a.output_activation));
        w.u8(a.inverse_edges as u8);
        w.u8(a.use_encoder as u8);
        let blocks = self.params.blocks();
        w.u32(blocks.len());
        for m in blocks {
            w.matrix(m);
        }
        match &self.scorer {
            None => w.u8(0),
            Some(s) => {
                w.u8(1);
                w.strs(&s.relations);
                w.strs(&s.space.entity_types);
                w.u32(s.depth);
                w.u32(s.hidden);
                w.u32(s.weights.len());
                for m in &s.weights {
                    w.matrix(m);
                }
            }
        }
        let sum = fnv1a(&w.0);
        w.u64(sum);
        w.0
    }

    /// Parses and validates a container. Any inconsistency is an
    /// [`Error::Checkpoint`]; malformed input never panics.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: MAGIC.len() };
        let version = r.u32("version")?;
        if version != VERSION as usize {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let config = r.str("config")?;
        let entities = Vocab::from_names(r.strs("entity vocabulary")?).map_err(|e| corrupt(e.to_string()))?;
        let relations = Vocab::from_names(r.strs("relation vocabulary")?).map_err(|e| corrupt(e.to_string()))?;
        let n = r.u64("triple count")?;
        let n = r.count(usize::try_from(n).unwrap_or(usize::MAX), 13, "triple")?;
        let mut triples = Vec::with_capacity(n);
        for _ in 0..n {
            let h = r.u32("triple")?;
            let rel = r.u32("triple")?;
            let t = r.u32("triple")?;
            let rank = r.u8("triple")?;
            let provenance = Provenance::from_rank(rank).ok_or_else(|| corrupt(format!("unknown provenance rank {rank}")))?;
            triples.push(Triple::new(EntityId(h as u32), RelationId(rel as u32), EntityId(t as u32), provenance));
        }
        let graph = KnowledgeGraph::from_parts(entities, relations, triples).map_err(|e| corrupt(e.to_string()))?;

        let arch = Architecture {
            dim: r.u32("dim")?,
            layers: r.u32("layers")?,
            blocks: r.u32("blocks")?,
            activation: r.activation("activation")?,
            output_activation: r.activation("output activation")?,
            inverse_edges: r.flag("inverse edges")?,
            use_encoder: r.flag("use encoder")?,
        };
        arch.validate().map_err(|e| corrupt(e.to_string()))?;
        let count = r.u32("matrix count")?;
        let count = r.count(count, 8, "matrix")?;
        let matrices: Vec<Array2<f64>> = (0..count).map(|_| r.matrix("model matrix")).collect::<Result<_>>()?;
        let params = params_from_matrices(arch, matrices, graph.num_entities(), graph.num_relations())?;

        let scorer = if r.flag("scorer present")? {
            let relations = r.strs("scorer relations")?;
            let entity_types = r.strs("scorer entity types")?;
            let depth = r.u32("scorer depth")?;
            let hidden = r.u32("scorer hidden width")?;
            let count = r.u32("scorer matrix count")?;
            let count = r.count(count, 8, "scorer matrix")?;
            let weights = (0..count).map(|_| r.matrix("scorer matrix")).collect::<Result<_>>()?;
            let s = ReasoningScorer {
                relations,
                space: FeatureSpace { entity_types },
                depth,
                hidden,
                weights,
            };
            s.check_shapes().map_err(|e| corrupt(e.to_string()))?;
            Some(s)
        } else {
            None
        };
        if r.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            config,
            graph,
            params,
            scorer,
        })
    }
}

fn params_from_matrices(
    arch: Architecture,
    matrices: Vec<Array2<f64>>,
    num_entities: usize,
    num_relations: usize,
) -> Result<ModelParams> {
    let layers = if arch.use_encoder { arch.layers } else { 0 };
    let slots = arch.relation_slots(num_relations);
    let expected = 2 + layers * (1 + slots);
    if matrices.len() != expected {
        return Err(corrupt(format!("{} matrices, expected {expected}", matrices.len())));
    }
    // Build with zero-sized placeholders, then swap in the decoded blocks.
    let mut params = ModelParams::zeros(arch, 0, 0);
    params.layers = (0..layers)
        .map(|_| crate::linkpred::RgcnLayer {
            self_loop: Array2::zeros((0, 0)),
            relation_weights: vec![Array2::zeros((0, 0)); slots],
        })
        .collect();
    for (slot, m) in params.blocks_mut().into_iter().zip(matrices) {
        *slot = m;
    }
    params.check_shapes(num_entities, num_relations).map_err(|e| corrupt(e.to_string()))?;
    if !params.is_finite() {
        return Err(corrupt("non-finite parameter"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::NamedTriple;
    use crate::linkpred::{train, TrainConfig};
    use crate::reasoning::ScorerConfig;

    fn sample() -> Checkpoint {
        let mut g = KnowledgeGraph::new();
        for (h, r, t, p) in [
            ("a", "r", "b", Provenance::CoreLabel),
            ("b", "r", "c", Provenance::Extracted),
            ("c", "s", "a", Provenance::PathContext),
        ] {
            g.add_named(&NamedTriple::new(h, r, t, p)).unwrap();
        }
        g.freeze_vocab();
        let config = TrainConfig {
            dim: 4,
            blocks: 2,
            epochs: 3,
            ..TrainConfig::default()
        };
        let params = train(&g, &config).unwrap();
        let scorer = ReasoningScorer::init(
            vec!["r".into()],
            FeatureSpace {
                entity_types: vec!["LOC".into()],
            },
            &ScorerConfig {
                depth: 2,
                hidden: 3,
                ..ScorerConfig::default()
            },
        );
        Checkpoint {
            config: serde_json::to_string(&config).unwrap(),
            graph: g,
            params,
            scorer: Some(scorer),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
        let bare = Checkpoint { scorer: None, ..ck };
        assert_eq!(Checkpoint::decode(&bare.encode()).unwrap(), bare);
    }

    #[test]
    fn damaged_input_is_rejected() {
        let bytes = sample().encode();
        for cut in [0, 7, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::decode(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x10;
        assert!(matches!(Checkpoint::decode(&flipped), Err(Error::Checkpoint(_))));
        let mut extra = bytes[..bytes.len() - 8].to_vec();
        extra.push(0);
        let sum = fnv1a(&extra);
        extra.extend_from_slice(&sum.to_le_bytes());
        assert!(matches!(Checkpoint::decode(&extra), Err(Error::Checkpoint(_))));
    }
}
