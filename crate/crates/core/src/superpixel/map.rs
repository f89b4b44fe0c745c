use crate::error::{Error, Result};

/// Axis-aligned pixel bounds, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub pixel_count: usize,
    /// Mean pixel coordinate `(p_x, p_y)`: column, row.
    pub centroid: (f64, f64),
    pub bbox: BBox,
}

/// Dense partition of an image into regions `0..R`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    regions: Vec<Region>,
}

impl SuperpixelMap {
    /// Builds the map from per-pixel ids, which must already be dense (`0..R`, none empty).
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Argument(format!(
                "label map of {} entries for a {width}x{height} image",
                labels.len()
            )));
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut sums = vec![(0usize, 0.0f64, 0.0f64); count];
        let mut boxes = vec![
            BBox {
                x0: usize::MAX,
                y0: usize::MAX,
                x1: 0,
                y1: 0
            };
            count
        ];
        for (i, &l) in labels.iter().enumerate() {
            let (x, y) = (i % width, i / width);
            let s = &mut sums[l as usize];
            s.0 += 1;
            s.1 += x as f64;
            s.2 += y as f64;
            let b = &mut boxes[l as usize];
            b.x0 = b.x0.min(x);
            b.y0 = b.y0.min(y);
            b.x1 = b.x1.max(x);
            b.y1 = b.y1.max(y);
        }
        if let Some(empty) = sums.iter().position(|s| s.0 == 0) {
            return Err(Error::Argument(format!("region id {empty} has no pixels")));
        }
        let regions = sums
            .into_iter()
            .zip(boxes)
            .map(|((n, sx, sy), bbox)| Region {
                pixel_count: n,
                centroid: (sx / n as f64, sy / n as f64),
                bbox,
            })
            .collect();
        Ok(Self {
            width,
            height,
            labels,
            regions,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Flat pixel indices of every region.
    pub fn region_pixels(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.regions.iter().map(|r| Vec::with_capacity(r.pixel_count)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    /// Number of 4-neighbour pixel pairs that straddle two regions.
    pub fn boundary_length(&self) -> usize {
        let (w, h) = (self.width, self.height);
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                if x + 1 < w && self.labels[y * w + x + 1] != l {
                    n += 1;
                }
                if y + 1 < h && self.labels[(y + 1) * w + x] != l {
                    n += 1;
                }
            }
        }
        n
    }
}

/// True when every region of `labels` forms a single 4-connected component.
pub fn is_four_connected(width: usize, height: usize, labels: &[u32]) -> bool {
    let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut seen_label = vec![false; count];
    let mut visited = vec![false; labels.len()];
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if visited[start] {
            continue;
        }
        let l = labels[start];
        if seen_label[l as usize] {
            return false;
        }
        seen_label[l as usize] = true;
        visited[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in neighbours4(p, width, height) {
                if !visited[q] && labels[q] == l {
                    visited[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    true
}

pub(crate) fn neighbours4(p: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % width, p / width);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < width).then(|| p + 1);
    let up = (y > 0).then(|| p - width);
    let down = (y + 1 < height).then(|| p + width);
    [left, right, up, down].into_iter().flatten()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_is_mean_coordinate() {
        // 3x2 image: region 0 = left column, region 1 = the rest
        let map = SuperpixelMap::from_labels(3, 2, vec![0, 1, 1, 0, 1, 1]).unwrap();
        assert_eq!(map.regions()[0].centroid, (0.0, 0.5));
        assert_eq!(map.regions()[1].centroid, (1.5, 0.5));
        assert_eq!(
            map.regions()[1].bbox,
            BBox {
                x0: 1,
                y0: 0,
                x1: 2,
                y1: 1
            }
        );
        assert_eq!(map.boundary_length(), 2);
    }

    #[test]
    fn sparse_ids_are_rejected() {
        assert!(SuperpixelMap::from_labels(2, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn connectivity_checker() {
        assert!(is_four_connected(3, 1, &[0, 0, 1]));
        assert!(!is_four_connected(3, 1, &[0, 1, 0]));
        // diagonal touch is not 4-connected
        assert!(!is_four_connected(2, 2, &[0, 1, 1, 0]));
    }
}
