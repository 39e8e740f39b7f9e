//! Flat parameter storage with named tensor slices.

use std::ops::Range;

use crate::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Layer norms start at one, biases at zero, everything else random.
    pub fn init_kind(&self) -> InitKind {
        let leaf = self.name.rsplit('.').next().unwrap_or("");
        match leaf {
            "g" => InitKind::One,
            "b" | "b_qkv" | "b_o" | "b_fc" | "b_proj" => InitKind::Zero,
            _ => InitKind::Normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Normal,
    Zero,
    One,
}

/// Offsets of one block's tensors.
#[derive(Debug, Clone)]
pub struct BlockSlots {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc: Range<usize>,
    pub b_fc: Range<usize>,
    pub w_proj: Range<usize>,
    pub b_proj: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub wte: Range<usize>,
    pub wpe: Range<usize>,
    pub blocks: Vec<BlockSlots>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (d, f) = (c.d_model, c.d_ff);
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec { name, shape, offset };
            offset += spec.len();
            let r = spec.range();
            tensors.push(spec);
            r
        };
        let wte = add("wte".into(), vec![c.vocab_size, d]);
        let wpe = add("wpe".into(), vec![c.context_length, d]);
        let mut blocks = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let p = |s: &str| format!("h{l}.{s}");
            blocks.push(BlockSlots {
                ln1_g: add(p("ln1.g"), vec![d]),
                ln1_b: add(p("ln1.b"), vec![d]),
                w_qkv: add(p("attn.w_qkv"), vec![d, 3 * d]),
                b_qkv: add(p("attn.b_qkv"), vec![3 * d]),
                w_o: add(p("attn.w_o"), vec![d, d]),
                b_o: add(p("attn.b_o"), vec![d]),
                ln2_g: add(p("ln2.g"), vec![d]),
                ln2_b: add(p("ln2.b"), vec![d]),
                w_fc: add(p("mlp.w_fc"), vec![d, f]),
                b_fc: add(p("mlp.b_fc"), vec![f]),
                w_proj: add(p("mlp.w_proj"), vec![f, d]),
                b_proj: add(p("mlp.b_proj"), vec![d]),
            });
        }
        let lnf_g = add("lnf.g".into(), vec![d]);
        let lnf_b = add("lnf.b".into(), vec![d]);
        Self { tensors, wte, wpe, blocks, lnf_g, lnf_b, total: offset }
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
