use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::SHLight;

use super::bundle::ModelBundle;

/// The optimized unknowns of all three stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub beta: Vec<f64>,
    /// Axis-angle camera rotation (radians).
    pub rot: [f64; 3],
    /// Camera center in model units.
    pub trans: [f64; 3],
    pub sh: SHLight,
    pub roughness: f64,
    pub texture_resolution: usize,
    pub medium_diffuse_inc: Vec<[f64; 3]>,
    pub medium_specular_inc: Vec<[f64; 3]>,
    /// Tangent-space unit normals with positive z.
    pub fine_normal: Vec<[f64; 3]>,
    pub fine_diffuse_inc: Vec<[f64; 3]>,
}

/// One named group of parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Alpha,
    Delta,
    Beta,
    Rot,
    Trans,
    Sh,
    MediumDiffuse,
    MediumSpecular,
    FineNormal,
    FineDiffuse,
}

impl Block {
    pub const ALL: [Block; 10] = [
        Block::Alpha,
        Block::Delta,
        Block::Beta,
        Block::Rot,
        Block::Trans,
        Block::Sh,
        Block::MediumDiffuse,
        Block::MediumSpecular,
        Block::FineNormal,
        Block::FineDiffuse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Alpha => "alpha",
            Block::Delta => "delta",
            Block::Beta => "beta",
            Block::Rot => "rot",
            Block::Trans => "trans",
            Block::Sh => "sh",
            Block::MediumDiffuse => "medium_diffuse_inc",
            Block::MediumSpecular => "medium_specular_inc",
            Block::FineNormal => "fine_normal",
            Block::FineDiffuse => "fine_diffuse_inc",
        }
    }

    pub fn is_map(self) -> bool {
        matches!(self, Block::MediumDiffuse | Block::MediumSpecular | Block::FineNormal | Block::FineDiffuse)
    }
}

impl SceneParams {
    /// All-zero coefficients, identity rotation, zero maps, flat normals.
    pub fn neutral(b: &ModelBundle, trans: [f64; 3], sh: SHLight, roughness: f64) -> Self {
        let texels = b.texture_resolution * b.texture_resolution;
        SceneParams {
            alpha: vec![0.0; b.k_shape],
            delta: vec![0.0; b.k_expr],
            beta: vec![0.0; b.k_refl],
            rot: [0.0; 3],
            trans,
            sh,
            roughness,
            texture_resolution: b.texture_resolution,
            medium_diffuse_inc: vec![[0.0; 3]; texels],
            medium_specular_inc: vec![[0.0; 3]; texels],
            fine_normal: vec![[0.0, 0.0, 1.0]; texels],
            fine_diffuse_inc: vec![[0.0; 3]; texels],
        }
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Alpha => &self.alpha,
            Block::Delta => &self.delta,
            Block::Beta => &self.beta,
            Block::Rot => &self.rot,
            Block::Trans => &self.trans,
            Block::Sh => self.sh.coeffs.as_flattened(),
            Block::MediumDiffuse => self.medium_diffuse_inc.as_flattened(),
            Block::MediumSpecular => self.medium_specular_inc.as_flattened(),
            Block::FineNormal => self.fine_normal.as_flattened(),
            Block::FineDiffuse => self.fine_diffuse_inc.as_flattened(),
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        match b {
            Block::Alpha => &mut self.alpha,
            Block::Delta => &mut self.delta,
            Block::Beta => &mut self.beta,
            Block::Rot => &mut self.rot,
            Block::Trans => &mut self.trans,
            Block::Sh => self.sh.coeffs.as_flattened_mut(),
            Block::MediumDiffuse => self.medium_diffuse_inc.as_flattened_mut(),
            Block::MediumSpecular => self.medium_specular_inc.as_flattened_mut(),
            Block::FineNormal => self.fine_normal.as_flattened_mut(),
            Block::FineDiffuse => self.fine_diffuse_inc.as_flattened_mut(),
        }
    }

    /// Renormalize normal-map texels and keep them in the upper hemisphere.
    pub fn project_normals(&mut self) {
        for n in &mut self.fine_normal {
            n[2] = n[2].max(1e-3);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            for c in n.iter_mut() {
                *c /= len;
            }
        }
    }

    pub fn validate(&self, b: &ModelBundle) -> Result<()> {
        let texels = b.texture_resolution * b.texture_resolution;
        let dims = [
            ("alpha", b.k_shape, self.alpha.len()),
            ("delta", b.k_expr, self.delta.len()),
            ("beta", b.k_refl, self.beta.len()),
            ("texture_resolution", b.texture_resolution, self.texture_resolution),
            ("medium_diffuse_inc", texels, self.medium_diffuse_inc.len()),
            ("medium_specular_inc", texels, self.medium_specular_inc.len()),
            ("fine_normal", texels, self.fine_normal.len()),
            ("fine_diffuse_inc", texels, self.fine_diffuse_inc.len()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(Error::DimensionMismatch { what: what.into(), expected, found });
            }
        }
        for blk in Block::ALL {
            if self.block(blk).iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams(format!("parameter block {} is not finite", blk.name())));
            }
        }
        for n in &self.fine_normal {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (len - 1.0).abs() > 1e-2 || n[2] <= 0.0 {
                return Err(Error::InvalidParams("fine normal texels must be near unit length with positive z".into()));
            }
        }
        Ok(())
    }
}
