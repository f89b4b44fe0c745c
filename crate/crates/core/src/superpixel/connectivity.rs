use super::map::{neighbours4, SuperpixelMap};
use crate::error::Result;

/// Splits every label into 4-connected components, merges components smaller
/// than `min_size` into their largest adjacent component, and renumbers the
/// result densely in raster order of first appearance.
pub fn enforce_connectivity(width: usize, height: usize, labels: &[u32], min_size: usize) -> Result<SuperpixelMap> {
    let n = width * height;
    assert_eq!(labels.len(), n, "label map does not cover the image");

    // connected components, numbered in raster order
    let mut comp = vec![u32::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let l = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for q in neighbours4(p, width, height) {
                if comp[q] == u32::MAX && labels[q] == l {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
        sizes.push(size);
    }

    let count = sizes.len();
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); count];
    for p in 0..n {
        let a = comp[p];
        let (x, y) = (p % width, p / width);
        for q in [(x + 1 < width).then(|| p + 1), (y + 1 < height).then(|| p + width)]
            .into_iter()
            .flatten()
        {
            let b = comp[q];
            if a != b {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    // union-find; merged sizes live at the root
    let mut parent: Vec<u32> = (0..count as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    let mut merged_size = sizes.clone();
    let mut members: Vec<Vec<u32>> = (0..count as u32).map(|c| vec![c]).collect();

    let mut order: Vec<u32> = (0..count as u32).filter(|&c| sizes[c as usize] < min_size).collect();
    order.sort_by_key(|&c| (sizes[c as usize], c));
    for c in order {
        let root = find(&mut parent, c);
        if merged_size[root as usize] >= min_size {
            continue;
        }
        // neighbours of the whole merged group
        let group = members[root as usize].clone();
        let mut best: Option<(usize, u32)> = None;
        for &m in &group {
            for &nb in &adjacency[m as usize] {
                let r = find(&mut parent, nb);
                if r == root {
                    continue;
                }
                let s = merged_size[r as usize];
                if best.is_none_or(|(bs, br)| s > bs || (s == bs && r < br)) {
                    best = Some((s, r));
                }
            }
        }
        if let Some((_, target)) = best {
            parent[root as usize] = target;
            merged_size[target as usize] += merged_size[root as usize];
            let moved = std::mem::take(&mut members[root as usize]);
            members[target as usize].extend(moved);
        }
    }

    let mut dense = vec![u32::MAX; count];
    let mut next = 0u32;
    let mut out = vec![0u32; n];
    for p in 0..n {
        let r = find(&mut parent, comp[p]) as usize;
        if dense[r] == u32::MAX {
            dense[r] = next;
            next += 1;
        }
        out[p] = dense[r];
    }
    SuperpixelMap::from_labels(width, height, out)
}

/// Re-applies connectivity enforcement to an existing map.
pub fn reconnect(map: &SuperpixelMap, min_size: usize) -> Result<SuperpixelMap> {
    enforce_connectivity(map.width(), map.height(), map.labels(), min_size)
}

#[cfg(test)]
mod tests {
    use super::super::map::is_four_connected;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn connected_map_is_unchanged() {
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 2, 2];
        let map = enforce_connectivity(4, 3, &labels, 2).unwrap();
        assert_eq!(map.labels(), labels.as_slice());
    }

    #[test]
    fn two_pixel_orphan_is_absorbed() {
        #[rustfmt::skip]
        let labels = vec![
            0, 0, 0, 0, 1, 1,
            0, 1, 1, 0, 1, 1,
            0, 0, 0, 0, 1, 1,
        ];
        // the two 1-pixels inside region 0 are disconnected from the right block
        let map = enforce_connectivity(6, 3, &labels, 3).unwrap();
        assert_eq!(map.region_count(), 2);
        assert_eq!(map.label_at(1, 1), map.label_at(0, 0));
        assert_eq!(map.regions()[0].pixel_count, 12);
    }

    #[test]
    fn split_label_becomes_two_regions_when_large() {
        let labels = vec![0, 0, 1, 0, 0];
        let map = enforce_connectivity(5, 1, &labels, 1).unwrap();
        assert_eq!(map.labels(), &[0, 0, 1, 2, 2]);
    }

    proptest! {
        #[test]
        fn random_noise_becomes_connected_and_idempotent(
            noise in proptest::collection::vec(0u32..6, 32 * 32),
            min_size in 1usize..64,
        ) {
            let map = enforce_connectivity(32, 32, &noise, min_size).unwrap();
            prop_assert!(is_four_connected(32, 32, map.labels()));
            let total: usize = map.regions().iter().map(|r| r.pixel_count).sum();
            prop_assert_eq!(total, 32 * 32);
            if map.region_count() > 1 {
                prop_assert!(map.regions().iter().all(|r| r.pixel_count >= min_size));
            }
            let again = reconnect(&map, min_size).unwrap();
            prop_assert_eq!(again.labels(), map.labels());
        }
    }
}
