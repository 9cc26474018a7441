use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Architecture {
    Vit,
    Resnet,
    Vgg,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Vit, Architecture::Resnet, Architecture::Vgg];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Vit => "vit",
            Architecture::Resnet => "resnet",
            Architecture::Vgg => "vgg",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct VitConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub depth: usize,
    pub mlp_ratio: usize,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            patch_size: 4,
            embed_dim: 64,
            heads: 4,
            depth: 4,
            mlp_ratio: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ResnetConfig {
    /// Channel width of each stage; stages after the first downsample by 2.
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
}

impl Default for ResnetConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64],
            blocks_per_stage: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct VggConfig {
    /// Channel width of each conv block; every block ends in 2×2 max-pooling.
    pub widths: Vec<usize>,
    pub convs_per_block: usize,
    /// Width of the hidden dense layer.
    pub hidden: usize,
}

impl Default for VggConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64],
            convs_per_block: 2,
            hidden: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "arch", rename_all = "lowercase"))]
pub enum ArchConfig {
    Vit(VitConfig),
    Resnet(ResnetConfig),
    Vgg(VggConfig),
}

impl ArchConfig {
    pub fn architecture(&self) -> Architecture {
        match self {
            ArchConfig::Vit(_) => Architecture::Vit,
            ArchConfig::Resnet(_) => Architecture::Resnet,
            ArchConfig::Vgg(_) => Architecture::Vgg,
        }
    }

    pub fn default_for(arch: Architecture) -> Self {
        match arch {
            Architecture::Vit => ArchConfig::Vit(VitConfig::default()),
            Architecture::Resnet => ArchConfig::Resnet(ResnetConfig::default()),
            Architecture::Vgg => ArchConfig::Vgg(VggConfig::default()),
        }
    }
}

/// Shape of a classifier: input geometry, class count, and architecture
/// hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierSpec {
    /// Square input side length in pixels.
    pub resolution: usize,
    pub channels: usize,
    pub classes: usize,
    pub arch: ArchConfig,
}

impl ClassifierSpec {
    /// 32×32 RGB, 5 classes, default hyperparameters for `arch`.
    pub fn new(arch: Architecture) -> Self {
        Self {
            resolution: 32,
            channels: 3,
            classes: 5,
            arch: ArchConfig::default_for(arch),
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch.architecture()
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [self.channels, self.resolution, self.resolution]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: alloc::string::String| Err(ModelError::Spec(m));
        if self.classes < 2 {
            return err(format!("class count must be at least 2, got {}", self.classes));
        }
        if self.resolution == 0 || self.channels == 0 {
            return err("resolution and channels must be positive".into());
        }
        match &self.arch {
            ArchConfig::Vit(v) => {
                if v.patch_size == 0 || self.resolution % v.patch_size != 0 {
                    return err(format!(
                        "resolution {} not divisible by patch size {}",
                        self.resolution, v.patch_size
                    ));
                }
                if v.heads == 0 || v.embed_dim % v.heads != 0 {
                    return err(format!(
                        "embed dim {} not divisible by {} heads",
                        v.embed_dim, v.heads
                    ));
                }
                if v.depth == 0 || v.mlp_ratio == 0 {
                    return err("depth and mlp ratio must be positive".into());
                }
            }
            ArchConfig::Resnet(r) => {
                if r.widths.is_empty() || r.widths.contains(&0) || r.blocks_per_stage == 0 {
                    return err("resnet needs non-empty positive widths and ≥1 block per stage".into());
                }
                if self.resolution < 1 << (r.widths.len() - 1) {
                    return err(format!(
                        "resolution {} too small for {} stages",
                        self.resolution,
                        r.widths.len()
                    ));
                }
            }
            ArchConfig::Vgg(v) => {
                if v.widths.is_empty() || v.widths.contains(&0) || v.convs_per_block == 0 || v.hidden == 0 {
                    return err("vgg needs non-empty positive widths, convs and hidden width".into());
                }
                if self.resolution >> v.widths.len() == 0 {
                    return err(format!(
                        "resolution {} too small for {} pooling stages",
                        self.resolution,
                        v.widths.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `(name, shape)` of every parameter in declaration order.
pub fn parameter_layout(spec: &ClassifierSpec) -> Result<Vec<(alloc::string::String, Vec<usize>)>, ModelError> {
    spec.validate()?;
    Ok(super::ParamStore::<f32>::declare(spec, 0)
        .iter()
        .map(|p| (p.name.clone(), p.tensor.shape().to_vec()))
        .collect())
}
