//! Model persistence: a self-describing, versioned binary format that is
//! bit-exact across platforms. Little-endian fixed-width integers, 64-bit
//! IEEE thresholds, trees as preorder node streams.

use crate::error::{Error, Result};
use crate::forest::{ForestConfig, ForestModel, Node, Tree};

const MAGIC: &[u8; 4] = b"BSRF";
const VERSION: u16 = 1;

pub fn save_model(model: &ForestModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let config = model.config();
    out.extend_from_slice(&(config.n_trees as u32).to_le_bytes());
    let mtry = config.mtry.expect("trained models carry a resolved mtry");
    out.extend_from_slice(&(mtry as u32).to_le_bytes());
    out.extend_from_slice(&(config.min_node_size as u32).to_le_bytes());
    out.push(config.max_depth.is_some() as u8);
    out.extend_from_slice(&(config.max_depth.unwrap_or(0) as u32).to_le_bytes());
    out.push(config.bootstrap as u8);
    out.extend_from_slice(&config.seed.to_le_bytes());

    out.extend_from_slice(&(model.feature_len() as u32).to_le_bytes());
    out.extend_from_slice(&(model.label_names().len() as u32).to_le_bytes());
    for name in model.label_names() {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
    }

    out.extend_from_slice(&(model.trees().len() as u32).to_le_bytes());
    for tree in model.trees() {
        write_tree(&mut out, tree);
    }
    out
}

fn write_tree(out: &mut Vec<u8>, tree: &Tree) {
    out.extend_from_slice(&(tree.nodes().len() as u32).to_le_bytes());
    // Iterative preorder: push right before left so left pops first.
    let mut stack = vec![0usize];
    while let Some(at) = stack.pop() {
        match &tree.nodes()[at] {
            Node::Leaf { class_counts } => {
                out.push(0);
                for &c in class_counts {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            Node::Split { feature, threshold, left, right } => {
                out.push(1);
                out.extend_from_slice(&feature.to_le_bytes());
                out.extend_from_slice(&threshold.to_le_bytes());
                stack.push(*right as usize);
                stack.push(*left as usize);
            }
        }
    }
}

pub fn load_model(data: &[u8]) -> Result<ForestModel> {
    let mut r = Reader { data, pos: 0 };

    if r.bytes(4)? != MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }

    let n_trees = r.u32()? as usize;
    let mtry = r.u32()? as usize;
    let min_node_size = r.u32()? as usize;
    let has_depth = r.u8()? != 0;
    let depth_value = r.u32()? as usize;
    let bootstrap = r.u8()? != 0;
    let seed = r.u64()?;
    let feature_len = r.u32()? as usize;

    let n_labels = r.u32()? as usize;
    // Counts come from the (untrusted) stream: never pre-allocate from them
    // beyond what the remaining bytes could possibly encode.
    let mut label_names = Vec::with_capacity(n_labels.min(r.remaining() / 2));
    for _ in 0..n_labels {
        let len = r.u16()? as usize;
        let bytes = r.bytes(len)?;
        let name = std::str::from_utf8(bytes)
            .map_err(|_| Error::ModelFormat("label name is not UTF-8".into()))?;
        label_names.push(name.to_string());
    }
    if n_labels == 0 {
        return Err(Error::ModelFormat("model declares no classes".into()));
    }

    let tree_count = r.u32()? as usize;
    if tree_count != n_trees {
        return Err(Error::ModelFormat(format!(
            "config says {n_trees} trees, stream carries {tree_count}"
        )));
    }
    let mut trees = Vec::with_capacity(tree_count.min(r.remaining() / 5));
    for _ in 0..tree_count {
        trees.push(read_tree(&mut r, n_labels, feature_len)?);
    }
    if r.pos != data.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after model",
            data.len() - r.pos
        )));
    }

    Ok(ForestModel {
        trees,
        config: ForestConfig {
            n_trees,
            mtry: Some(mtry),
            min_node_size,
            max_depth: has_depth.then_some(depth_value),
            bootstrap,
            seed,
        },
        label_names,
        feature_len,
        in_bag: Vec::new(),
    })
}

const UNSET: u32 = u32::MAX;

fn read_tree(r: &mut Reader, n_labels: usize, feature_len: usize) -> Result<Tree> {
    let node_count = r.u32()? as usize;
    if node_count == 0 {
        return Err(Error::ModelFormat("tree with zero nodes".into()));
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(node_count.min(r.remaining() / 5));
    // Split slots still waiting for children; the top is the attach point.
    let mut open: Vec<usize> = Vec::new();
    for _ in 0..node_count {
        let slot = nodes.len();
        if slot > 0 && open.is_empty() {
            return Err(Error::ModelFormat("node outside any subtree".into()));
        }
        let node = match r.u8()? {
            0 => {
                let mut class_counts = Vec::with_capacity(n_labels.min(r.remaining() / 4));
                for _ in 0..n_labels {
                    class_counts.push(r.u32()?);
                }
                Node::Leaf { class_counts }
            }
            1 => {
                let feature = r.u32()?;
                if feature as usize >= feature_len {
                    return Err(Error::ModelFormat(format!(
                        "split on feature {feature} but feature length is {feature_len}"
                    )));
                }
                let threshold = f64::from_le_bytes(
                    r.bytes(8)?.try_into().expect("8 bytes requested"),
                );
                if !threshold.is_finite() {
                    return Err(Error::ModelFormat("non-finite split threshold".into()));
                }
                Node::Split { feature, threshold, left: UNSET, right: UNSET }
            }
            tag => return Err(Error::ModelFormat(format!("unknown node tag {tag}"))),
        };
        if slot > 0 {
            let parent = *open.last().expect("checked above");
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if *left == UNSET {
                    *left = slot as u32;
                } else {
                    *right = slot as u32;
                    open.pop();
                }
            }
        }
        let is_split = matches!(node, Node::Split { .. });
        nodes.push(node);
        if is_split {
            open.push(slot);
        }
    }
    if !open.is_empty() {
        return Err(Error::ModelFormat("tree stream ended inside a subtree".into()));
    }
    Ok(Tree { nodes })
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::ModelFormat(format!(
                "truncated stream: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }
}
