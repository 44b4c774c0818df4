use std::collections::HashMap;
use std::path::PathBuf;

/// Resolves image dimensions for formats whose annotations omit them.
pub trait DimsLookup {
    /// `(width, height)` for the dataset-native image id.
    fn dims(&self, native_id: &str) -> Option<(u32, u32)>;
}

impl DimsLookup for HashMap<String, (u32, u32)> {
    fn dims(&self, native_id: &str) -> Option<(u32, u32)> {
        self.get(native_id).copied()
    }
}

impl<F> DimsLookup for F
where
    F: Fn(&str) -> Option<(u32, u32)>,
{
    fn dims(&self, native_id: &str) -> Option<(u32, u32)> {
        self(native_id)
    }
}

/// Reads dimensions from `root/<id>.<ext>` file headers without decoding pixels.
#[derive(Debug, Clone)]
pub struct HeaderDims {
    pub root: PathBuf,
    pub extension: String,
}

impl HeaderDims {
    pub fn new(root: impl Into<PathBuf>, extension: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            extension: extension.into(),
        }
    }

    pub fn path_for(&self, native_id: &str) -> PathBuf {
        self.root.join(format!("{native_id}.{}", self.extension))
    }
}

impl DimsLookup for HeaderDims {
    fn dims(&self, native_id: &str) -> Option<(u32, u32)> {
        image::image_dimensions(self.path_for(native_id)).ok()
    }
}
