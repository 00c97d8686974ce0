use serde::{Deserialize, Serialize};

/// Named slice of the flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub(crate) fn new(name: &str, shape: Vec<usize>) -> Self {
        Self {
            name: name.to_string(),
            offset: 0,
            len: shape.iter().product(),
            shape,
        }
    }
}

/// Flat parameter store; segments are contiguous and in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStore {
    pub data: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl WeightStore {
    pub(crate) fn from_segments(mut segments: Vec<Segment>) -> Self {
        let mut offset = 0;
        for s in &mut segments {
            s.offset = offset;
            offset += s.len;
        }
        Self {
            data: vec![0.0; offset],
            segments,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segment_info(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment(&self, name: &str) -> &[f64] {
        let s = self.segment_info(name).unwrap_or_else(|| panic!("no weight segment {name}"));
        &self.data[s.offset..s.offset + s.len]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self
            .segment_info(name)
            .unwrap_or_else(|| panic!("no weight segment {name}"))
            .clone();
        &mut self.data[s.offset..s.offset + s.len]
    }

    /// Segment layout is contiguous, ordered and covers the data exactly.
    pub fn is_consistent(&self) -> bool {
        let mut offset = 0;
        for s in &self.segments {
            if s.offset != offset || s.len != s.shape.iter().product::<usize>() {
                return false;
            }
            offset += s.len;
        }
        offset == self.data.len()
    }
}
