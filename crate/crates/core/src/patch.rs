//! Patch extraction and reassembly.
//!
//! Patches are `L×L` blocks addressed by their top-left origin and
//! vectorized row-major, so entry `r * L + c` of a column is pixel
//! `(origin_row + r, origin_col + c)`. A [`PatchMatrix`] holds one patch per
//! column (`d × N`, `d = L²`); the transpose is the `N × d` "patches as rows"
//! layout some texts use.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::image::Image;

/// Placement of patches on an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    patch_side: usize,
    stride: usize,
    image_width: usize,
    image_height: usize,
    origin_rows: Vec<usize>,
    origin_cols: Vec<usize>,
}

impl PatchGrid {
    /// Grid of `patch_side` patches stepped by `stride`.
    ///
    /// When `stride == patch_side` the grid must tile the image exactly. For
    /// other strides a final row/column of origins is appended where needed so
    /// that every pixel is covered by at least one patch.
    pub fn new(width: usize, height: usize, patch_side: usize, stride: usize) -> Result<Self> {
        if patch_side == 0 || stride == 0 {
            return Err(Error::InvalidParameter(
                "patch side and stride must be at least 1".into(),
            ));
        }
        if stride > patch_side {
            return Err(Error::InvalidParameter(format!(
                "stride {stride} larger than patch side {patch_side} leaves pixels uncovered"
            )));
        }
        if patch_side > width.min(height) {
            return Err(Error::Dimension(format!(
                "patch side {patch_side} exceeds image {width}x{height}"
            )));
        }
        if stride == patch_side
            && (!width.is_multiple_of(patch_side) || !height.is_multiple_of(patch_side))
        {
            return Err(Error::Dimension(format!(
                "{width}x{height} image cannot be tiled by {patch_side}x{patch_side} patches"
            )));
        }
        Ok(PatchGrid {
            patch_side,
            stride,
            image_width: width,
            image_height: height,
            origin_rows: axis_origins(height, patch_side, stride),
            origin_cols: axis_origins(width, patch_side, stride),
        })
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn origin_rows(&self) -> &[usize] {
        &self.origin_rows
    }

    pub fn origin_cols(&self) -> &[usize] {
        &self.origin_cols
    }

    /// Patch dimension `d = L²`.
    pub fn dim(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn num_patches(&self) -> usize {
        self.origin_rows.len() * self.origin_cols.len()
    }

    /// Top-left `(row, col)` of patch `index`; patches are ordered row-major
    /// over the grid.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        let per_row = self.origin_cols.len();
        (
            self.origin_rows[index / per_row],
            self.origin_cols[index % per_row],
        )
    }

    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.origin_rows
            .iter()
            .flat_map(move |&r| self.origin_cols.iter().map(move |&c| (r, c)))
    }

    pub fn is_tiling(&self) -> bool {
        self.stride == self.patch_side
    }
}

fn axis_origins(extent: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = extent - side;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if *origins.last().unwrap() != last {
        origins.push(last);
    }
    origins
}

/// Vectorized patches, one per column, with the grid that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub data: DMatrix<f64>,
    pub grid: PatchGrid,
}

impl PatchMatrix {
    pub fn new(data: DMatrix<f64>, grid: PatchGrid) -> Result<Self> {
        if data.nrows() != grid.dim() || data.ncols() != grid.num_patches() {
            return Err(Error::Dimension(format!(
                "patch data is {}x{}, grid expects {}x{}",
                data.nrows(),
                data.ncols(),
                grid.dim(),
                grid.num_patches()
            )));
        }
        Ok(PatchMatrix { data, grid })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.data.column(j).into_owned()
    }

    /// Same grid, different patch contents.
    pub fn with_data(&self, data: DMatrix<f64>) -> Result<Self> {
        PatchMatrix::new(data, self.grid.clone())
    }
}

pub fn extract_patches(img: &Image, patch_side: usize, stride: usize) -> Result<PatchMatrix> {
    let grid = PatchGrid::new(img.width(), img.height(), patch_side, stride)?;
    let l = patch_side;
    let mut data = DMatrix::zeros(grid.dim(), grid.num_patches());
    for (j, (r0, c0)) in grid.origins().enumerate() {
        let mut col = data.column_mut(j);
        for r in 0..l {
            for c in 0..l {
                col[r * l + c] = img.get(r0 + r, c0 + c);
            }
        }
    }
    Ok(PatchMatrix { data, grid })
}

/// Rebuilds the image, averaging uniformly wherever patches overlap.
pub fn reassemble(patches: &PatchMatrix) -> Result<Image> {
    let weights = vec![1.0; patches.len()];
    reassemble_weighted(patches, &weights)
}

/// Rebuilds the image with a per-patch weight; each pixel becomes the
/// weighted mean of the patch entries covering it.
pub fn reassemble_weighted(patches: &PatchMatrix, weights: &[f64]) -> Result<Image> {
    let grid = &patches.grid;
    if patches.data.nrows() != grid.dim() || patches.data.ncols() != grid.num_patches() {
        return Err(Error::Dimension(
            "patch data disagrees with its grid".into(),
        ));
    }
    if weights.len() != patches.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} patches",
            weights.len(),
            patches.len()
        )));
    }
    let (w, h, l) = (grid.image_width(), grid.image_height(), grid.patch_side());
    let mut acc = vec![0.0; w * h];
    let mut mass = vec![0.0; w * h];
    for (j, (r0, c0)) in grid.origins().enumerate() {
        let col = patches.data.column(j);
        let wt = weights[j];
        for r in 0..l {
            let base = (r0 + r) * w + c0;
            for c in 0..l {
                acc[base + c] += wt * col[r * l + c];
                mass[base + c] += wt;
            }
        }
    }
    if mass.iter().any(|&m| m <= 0.0) {
        return Err(Error::Dimension(
            "some pixels are not covered by a positively weighted patch".into(),
        ));
    }
    let pixels = acc.iter().zip(&mass).map(|(a, m)| a / m).collect();
    Image::new(w, h, pixels)
}
