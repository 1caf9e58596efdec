use serde::{Deserialize, Serialize};

/// Corridor lengths towards each edge room.
const CORRIDOR_DOWN: usize = 4;
const CORRIDOR_LEFT: usize = 8;
const CORRIDOR_UP: usize = 12;
const CORRIDOR_RIGHT: usize = 8;
const ROOM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Down,
    Left,
    Up,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Down, Direction::Left, Direction::Up, Direction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Up => "up",
            Direction::Right => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Center,
    Corridor(Direction),
    Room(Direction),
}

impl Region {
    pub fn is_edge_room(self) -> bool {
        matches!(self, Region::Room(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Open(Region),
}

/// The static Pac-Men map: a 3×3 center room joined by one-cell-wide
/// corridors to four 3×3 edge rooms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    open: Vec<(usize, usize)>,
    open_index: Vec<Option<usize>>,
    room_cells: [Vec<(usize, usize)>; 4],
    dot_index: Vec<Option<usize>>,
    center_cells: Vec<(usize, usize)>,
}

impl Layout {
    pub fn pacmen() -> Self {
        let rows = 1 + ROOM + CORRIDOR_UP + ROOM + CORRIDOR_DOWN + ROOM + 1;
        let cols = 1 + ROOM + CORRIDOR_LEFT + ROOM + CORRIDOR_RIGHT + ROOM + 1;
        let mut cells = vec![Cell::Wall; rows * cols];

        let center_top = 1 + ROOM + CORRIDOR_UP;
        let center_left = 1 + ROOM + CORRIDOR_LEFT;
        let mid_row = center_top + ROOM / 2;
        let mid_col = center_left + ROOM / 2;

        let mut carve = |r: usize, c: usize, region: Region| cells[r * cols + c] = Cell::Open(region);
        let room = |top: usize, left: usize, region: Region, carve: &mut dyn FnMut(usize, usize, Region)| {
            for r in top..top + ROOM {
                for c in left..left + ROOM {
                    carve(r, c, region);
                }
            }
        };

        room(center_top, center_left, Region::Center, &mut carve);
        room(1, center_left, Region::Room(Direction::Up), &mut carve);
        room(center_top + ROOM + CORRIDOR_DOWN, center_left, Region::Room(Direction::Down), &mut carve);
        room(center_top, 1, Region::Room(Direction::Left), &mut carve);
        room(center_top, center_left + ROOM + CORRIDOR_RIGHT, Region::Room(Direction::Right), &mut carve);

        for r in 1 + ROOM..center_top {
            carve(r, mid_col, Region::Corridor(Direction::Up));
        }
        for r in center_top + ROOM..center_top + ROOM + CORRIDOR_DOWN {
            carve(r, mid_col, Region::Corridor(Direction::Down));
        }
        for c in 1 + ROOM..center_left {
            carve(mid_row, c, Region::Corridor(Direction::Left));
        }
        for c in center_left + ROOM..center_left + ROOM + CORRIDOR_RIGHT {
            carve(mid_row, c, Region::Corridor(Direction::Right));
        }

        let mut open = Vec::new();
        let mut open_index = vec![None; rows * cols];
        let mut room_cells: [Vec<(usize, usize)>; 4] = Default::default();
        let mut center_cells = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if let Cell::Open(region) = cells[r * cols + c] {
                    open_index[r * cols + c] = Some(open.len());
                    open.push((r, c));
                    match region {
                        Region::Room(d) => room_cells[d.index()].push((r, c)),
                        Region::Center => center_cells.push((r, c)),
                        Region::Corridor(_) => {}
                    }
                }
            }
        }
        let mut dot_index = vec![None; rows * cols];
        for (k, &(r, c)) in room_cells.iter().flatten().enumerate() {
            dot_index[r * cols + c] = Some(k);
        }

        Self {
            rows,
            cols,
            cells,
            open,
            open_index,
            room_cells,
            dot_index,
            center_cells,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.cols + c]
    }

    /// Treats out-of-bounds coordinates as walls.
    pub fn cell_signed(&self, r: isize, c: isize) -> Cell {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            Cell::Wall
        } else {
            self.cell(r as usize, c as usize)
        }
    }

    pub fn is_open(&self, r: usize, c: usize) -> bool {
        matches!(self.cell(r, c), Cell::Open(_))
    }

    pub fn region(&self, r: usize, c: usize) -> Option<Region> {
        match self.cell(r, c) {
            Cell::Open(region) => Some(region),
            Cell::Wall => None,
        }
    }

    /// Non-wall cells in row-major order.
    pub fn open_cells(&self) -> &[(usize, usize)] {
        &self.open
    }

    pub fn open_index(&self, r: usize, c: usize) -> Option<usize> {
        self.open_index[r * self.cols + c]
    }

    pub fn room_cells(&self, d: Direction) -> &[(usize, usize)] {
        &self.room_cells[d.index()]
    }

    /// Position of a dot-capable cell in the dot bitmap.
    pub fn dot_index(&self, r: usize, c: usize) -> Option<usize> {
        self.dot_index[r * self.cols + c]
    }

    pub fn num_dot_cells(&self) -> usize {
        self.room_cells.iter().map(Vec::len).sum()
    }

    pub fn center_cells(&self) -> &[(usize, usize)] {
        &self.center_cells
    }

    pub fn corridor_length(&self, d: Direction) -> usize {
        self.open
            .iter()
            .filter(|&&(r, c)| self.region(r, c) == Some(Region::Corridor(d)))
            .count()
    }

    /// Breadth-first distances between open cells under unit moves.
    pub fn shortest_path(&self, from: (usize, usize), to: (usize, usize)) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.rows * self.cols];
        let mut queue = std::collections::VecDeque::new();
        dist[from.0 * self.cols + from.1] = 0;
        queue.push_back(from);
        while let Some((r, c)) = queue.pop_front() {
            if (r, c) == to {
                return Some(dist[r * self.cols + c]);
            }
            let d = dist[r * self.cols + c];
            let neighbours = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
            for (nr, nc) in neighbours {
                if nr < self.rows && nc < self.cols && self.is_open(nr, nc) && dist[nr * self.cols + nc] == usize::MAX {
                    dist[nr * self.cols + nc] = d + 1;
                    queue.push_back((nr, nc));
                }
            }
        }
        None
    }

    /// ASCII rendering: `#` wall, `.` open, `o` dot, digits for agents.
    pub fn render(&self, agents: &[(usize, usize)], dots: &[(usize, usize)]) -> String {
        let mut out = String::with_capacity((self.cols + 1) * self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let ch = if let Some(i) = agents.iter().position(|&p| p == (r, c)) {
                    std::char::from_digit(i as u32 % 10, 10).unwrap_or('A')
                } else if dots.contains(&(r, c)) {
                    'o'
                } else if self.is_open(r, c) {
                    '.'
                } else {
                    '#'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}
