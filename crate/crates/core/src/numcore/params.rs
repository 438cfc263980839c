use crate::error::{Error, Result};

/// One named block of a flat parameter vector, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        LayerShape {
            name: name.into(),
            rows,
            cols,
        }
    }

    pub fn size(&self) -> usize {
        self.rows * self.cols
    }
}

/// Flat real vector with an immutable manifest of named blocks.
///
/// The values may be updated in place; the manifest never changes once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedParams {
    data: Vec<f64>,
    manifest: Vec<LayerShape>,
}

impl ShapedParams {
    pub fn new(manifest: Vec<LayerShape>, data: Vec<f64>) -> Result<Self> {
        let total: usize = manifest.iter().map(LayerShape::size).sum();
        if total != data.len() {
            return Err(Error::dim("parameter manifest", total, data.len()));
        }
        Ok(ShapedParams { data, manifest })
    }

    pub fn zeros(manifest: Vec<LayerShape>) -> Self {
        let total = manifest.iter().map(LayerShape::size).sum();
        ShapedParams {
            data: vec![0.0; total],
            manifest,
        }
    }

    /// Same manifest, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        ShapedParams::new(self.manifest.clone(), data)
    }

    pub fn zeros_like(&self) -> Self {
        ShapedParams::zeros(self.manifest.clone())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn manifest(&self) -> &[LayerShape] {
        &self.manifest
    }

    fn offset_of(&self, name: &str) -> Option<(usize, &LayerShape)> {
        let mut off = 0;
        for shape in &self.manifest {
            if shape.name == name {
                return Some((off, shape));
            }
            off += shape.size();
        }
        None
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.offset_of(name)
            .map(|(off, s)| &self.data[off..off + s.size()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let (off, size) = self.offset_of(name).map(|(o, s)| (o, s.size()))?;
        Some(&mut self.data[off..off + size])
    }

    /// Concatenates parameter sets, prefixing every block name with `prefix.`.
    pub fn concat(parts: &[(&str, &ShapedParams)]) -> Self {
        let mut manifest = Vec::new();
        let mut data = Vec::new();
        for (prefix, p) in parts {
            for s in &p.manifest {
                manifest.push(LayerShape::new(format!("{prefix}.{}", s.name), s.rows, s.cols));
            }
            data.extend_from_slice(&p.data);
        }
        ShapedParams { data, manifest }
    }

    /// Extracts the blocks stored under `prefix.` (the inverse of [`concat`](Self::concat)).
    pub fn extract(&self, prefix: &str) -> Option<ShapedParams> {
        let head = format!("{prefix}.");
        let mut manifest = Vec::new();
        let mut data = Vec::new();
        let mut off = 0;
        for s in &self.manifest {
            if let Some(rest) = s.name.strip_prefix(&head) {
                manifest.push(LayerShape::new(rest, s.rows, s.cols));
                data.extend_from_slice(&self.data[off..off + s.size()]);
            }
            off += s.size();
        }
        (!manifest.is_empty()).then_some(ShapedParams { data, manifest })
    }

    /// Checks that `other` has this manifest; names the first mismatching block.
    pub fn check_manifest(&self, expected: &[LayerShape]) -> Result<()> {
        for (i, e) in expected.iter().enumerate() {
            match self.manifest.get(i) {
                Some(got) if got == e => {}
                Some(got) => {
                    return Err(Error::dim(
                        format!("layer {} ({}x{} expected)", e.name, e.rows, e.cols),
                        e.size(),
                        got.size(),
                    ))
                }
                None => return Err(Error::dim(format!("layer {} missing", e.name), e.size(), 0)),
            }
        }
        if self.manifest.len() != expected.len() {
            return Err(Error::dim("manifest entries", expected.len(), self.manifest.len()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_size_mismatch() {
        let m = vec![LayerShape::new("w", 2, 3)];
        assert!(ShapedParams::new(m.clone(), vec![0.0; 5]).is_err());
        assert!(ShapedParams::new(m, vec![0.0; 6]).is_ok());
    }

    #[test]
    fn concat_then_extract() {
        let a = ShapedParams::new(vec![LayerShape::new("w", 1, 2)], vec![1.0, 2.0]).unwrap();
        let b = ShapedParams::new(vec![LayerShape::new("b", 1, 1)], vec![3.0]).unwrap();
        let c = ShapedParams::concat(&[("phi", &a), ("base", &b)]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(c.block("base.b"), Some(&[3.0][..]));
        assert_eq!(c.extract("phi").unwrap(), a);
        assert_eq!(c.extract("base").unwrap(), b);
        assert!(c.extract("psi").is_none());
    }
}
