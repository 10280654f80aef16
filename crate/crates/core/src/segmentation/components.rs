//! Connected components of binary axial slices.

/// Pixel adjacency rule. Eight-connectivity keeps thin oblique artifacts
/// in one piece and is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// A binarized slice: plane dimensions, a dense pixel mask, and the flat
/// offsets of set pixels (kept so passes cost O(set) instead of O(plane)).
#[derive(Debug, Clone)]
pub struct BinarySlice {
    pub nx: usize,
    pub ny: usize,
    pub mask: Vec<bool>,
    pub set_offsets: Vec<u32>,
}

impl BinarySlice {
    pub fn new(nx: usize, ny: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), nx * ny, "mask length must equal nx*ny");
        let set_offsets = (0..mask.len() as u32).filter(|&o| mask[o as usize]).collect();
        BinarySlice {
            nx,
            ny,
            mask,
            set_offsets,
        }
    }
}

/// Partition set pixels into maximal connected components. Components are
/// ordered by their first pixel in scan order; pixels within a component
/// are in breadth-first discovery order.
pub fn connected_components_2d(slice: &BinarySlice, connectivity: Connectivity) -> Vec<Vec<u32>> {
    let nx = slice.nx as i64;
    let ny = slice.ny as i64;
    let mut visited = vec![false; slice.mask.len()];
    let mut components = Vec::new();
    let mut queue = std::collections::VecDeque::new();

    let neighbors: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ],
    };

    for &seed in &slice.set_offsets {
        if visited[seed as usize] {
            continue;
        }
        visited[seed as usize] = true;
        let mut members = vec![seed];
        queue.push_back(seed);
        while let Some(off) = queue.pop_front() {
            let x = i64::from(off) % nx;
            let y = i64::from(off) / nx;
            for &(dx, dy) in neighbors {
                let (px, py) = (x + dx, y + dy);
                if px < 0 || px >= nx || py < 0 || py >= ny {
                    continue;
                }
                let noff = (px + py * nx) as usize;
                if slice.mask[noff] && !visited[noff] {
                    visited[noff] = true;
                    members.push(noff as u32);
                    queue.push_back(noff as u32);
                }
            }
        }
        components.push(members);
    }
    components
}
