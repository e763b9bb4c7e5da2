//! Kernel bank configuration files.
//!
//! A config is an ordered TOML list:
//!
//! ```toml
//! [[kernel]]
//! family = "rbf"
//! gamma = 0.5
//! ```

use std::path::Path;

use serde::Deserialize;
use smkl_core::kernel::KernelSpec;

use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum Entry {
    Linear {},
    Polynomial { degree: u32, scale: f64, offset: f64 },
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64, offset: f64 },
    Laplacian { gamma: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    kernel: Vec<Entry>,
}

impl From<Entry> for KernelSpec {
    fn from(e: Entry) -> Self {
        match e {
            Entry::Linear {} => KernelSpec::Linear,
            Entry::Polynomial { degree, scale, offset } => KernelSpec::Polynomial { degree, scale, offset },
            Entry::Rbf { gamma } => KernelSpec::Rbf { gamma },
            Entry::Sigmoid { gamma, offset } => KernelSpec::Sigmoid { gamma, offset },
            Entry::Laplacian { gamma } => KernelSpec::Laplacian { gamma },
        }
    }
}

/// Parses a bank config. `origin` names the source in error messages.
pub fn parse_bank(text: &str, origin: &Path) -> Result<Vec<KernelSpec>> {
    let file: BankFile = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
    if file.kernel.is_empty() {
        return Err(Error::format(origin, "bank lists no kernels"));
    }
    let specs: Vec<KernelSpec> = file.kernel.into_iter().map(Into::into).collect();
    for (i, s) in specs.iter().enumerate() {
        s.validate().map_err(|e| Error::format(origin, format!("kernel {}: {e}", i + 1)))?;
    }
    Ok(specs)
}

pub fn load_bank(path: &Path) -> Result<Vec<KernelSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bank(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smkl_core::kernel::default_bank_specs;

    #[test]
    fn bundled_config_is_the_default_bank() {
        let text = include_str!("../configs/default10.toml");
        assert_eq!(parse_bank(text, Path::new("default10.toml")).unwrap(), default_bank_specs());
    }

    #[test]
    fn rejects_bad_entries() {
        let p = Path::new("k.toml");
        assert!(parse_bank("kernel = []", p).is_err());
        assert!(parse_bank("[[kernel]]\nfamily = \"rbf\"\ngamma = -1.0", p).is_err());
        assert!(parse_bank("[[kernel]]\nfamily = \"cosine\"", p).is_err());
        assert!(parse_bank("[[kernel]]\nfamily = \"linear\"\ngamma = 1.0", p).is_err());
    }
}
