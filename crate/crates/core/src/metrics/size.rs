use std::fmt;

/// Wire capture locations: driver egress (M1), proxy to target request (M2),
/// target to proxy reply (M3), proxy to driver reply (M4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Point {
    M1,
    M2,
    M3,
    M4,
}

impl Point {
    pub const ALL: [Point; 4] = [Point::M1, Point::M2, Point::M3, Point::M4];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeSample {
    pub point: Point,
    pub header_bytes: u64,
    pub body_bytes: u64,
}

/// `raw_head` is the start line plus header lines and the terminating blank
/// line, exactly as framed on the wire.
pub fn measure_http_sizes(raw_head: &[u8], raw_body: &[u8], point: Point) -> SizeSample {
    SizeSample {
        point,
        header_bytes: raw_head.len() as u64,
        body_bytes: raw_body.len() as u64,
    }
}
