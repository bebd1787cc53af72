//! Raw planar 4:2:0 video: frame buffers, sequences, Y4M and headerless YUV I/O.
//!
//! Only 8-bit content is supported. Frame buffers are immutable once built,
//! so sequences can be shared freely between workers behind an `Arc`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::FaceId;

const Y4M_MAGIC: &str = "YUV4MPEG2";
const FRAME_MAGIC: &[u8] = b"FRAME";

/// Frame rate as a positive rational number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Geometry(format!("frame rate {num}/{den} must be positive")));
        }
        Ok(Rational { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts `30`, `30:1` or `30000/1001`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Geometry(format!("invalid frame rate `{s}`"));
        let (n, d) = match s.split_once([':', '/']) {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let num = n.trim().parse().map_err(|_| bad())?;
        let den = d.trim().parse().map_err(|_| bad())?;
        Rational::new(num, den)
    }
}

/// Projection layout of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Erp,
    CmpFace,
}

/// One 8-bit 4:2:0 picture.
#[derive(Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    planes: [Vec<u8>; 3],
}

impl fmt::Debug for FrameBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

pub(crate) fn check_geometry(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Geometry(format!("{width}x{height} must be positive")));
    }
    if width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Geometry(format!("{width}x{height} must be even for 4:2:0")));
    }
    Ok(())
}

impl FrameBuffer {
    pub const BIT_DEPTH: u32 = 8;

    pub fn new(width: usize, height: usize, y: Vec<u8>, cb: Vec<u8>, cr: Vec<u8>) -> Result<Self> {
        check_geometry(width, height)?;
        let luma = width * height;
        let chroma = luma / 4;
        if y.len() != luma || cb.len() != chroma || cr.len() != chroma {
            return Err(Error::Geometry(format!(
                "plane lengths {}/{}/{} do not match {width}x{height}",
                y.len(),
                cb.len(),
                cr.len()
            )));
        }
        Ok(FrameBuffer {
            width,
            height,
            planes: [y, cb, cr],
        })
    }

    /// A frame with every sample of each plane set to the given value.
    pub fn filled(width: usize, height: usize, y: u8, cb: u8, cr: u8) -> Result<Self> {
        check_geometry(width, height)?;
        let chroma = width * height / 4;
        Self::new(
            width,
            height,
            vec![y; width * height],
            vec![cb; chroma],
            vec![cr; chroma],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u32 {
        Self::BIT_DEPTH
    }

    /// Plane `0` is luma, `1` Cb, `2` Cr.
    pub fn plane(&self, index: usize) -> &[u8] {
        &self.planes[index]
    }

    pub fn planes(&self) -> &[Vec<u8>; 3] {
        &self.planes
    }

    pub fn luma(&self) -> &[u8] {
        &self.planes[0]
    }

    /// Width and height of plane `index`.
    pub fn plane_dims(&self, index: usize) -> (usize, usize) {
        if index == 0 {
            (self.width, self.height)
        } else {
            (self.width / 2, self.height / 2)
        }
    }

    /// Size in bytes of one serialized frame.
    pub fn frame_bytes(width: usize, height: usize) -> usize {
        width * height * 3 / 2
    }

    pub fn into_planes(self) -> [Vec<u8>; 3] {
        self.planes
    }
}

/// An ordered list of same-geometry frames with frame rate and projection tag.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    width: usize,
    height: usize,
    fps: Rational,
    projection: Projection,
    face: Option<FaceId>,
    frames: Vec<FrameBuffer>,
}

impl VideoSequence {
    pub fn new(
        width: usize,
        height: usize,
        fps: Rational,
        projection: Projection,
        face: Option<FaceId>,
        frames: Vec<FrameBuffer>,
    ) -> Result<Self> {
        check_geometry(width, height)?;
        Rational::new(fps.num, fps.den)?;
        match (projection, face) {
            (Projection::Erp, Some(_)) => {
                return Err(Error::Projection("ERP sequence cannot carry a face id".into()))
            }
            (Projection::CmpFace, None) => {
                return Err(Error::Projection("cubemap face sequence needs a face id".into()))
            }
            _ => {}
        }
        if let Some(f) = frames
            .iter()
            .find(|f| f.width() != width || f.height() != height)
        {
            return Err(Error::Geometry(format!(
                "frame {}x{} does not match sequence {width}x{height}",
                f.width(),
                f.height()
            )));
        }
        Ok(VideoSequence {
            width,
            height,
            fps,
            projection,
            face,
            frames,
        })
    }

    pub fn erp(width: usize, height: usize, fps: Rational, frames: Vec<FrameBuffer>) -> Result<Self> {
        Self::new(width, height, fps, Projection::Erp, None, frames)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fps(&self) -> Rational {
        self.fps
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    pub fn face(&self) -> Option<FaceId> {
        self.face
    }

    pub fn frames(&self) -> &[FrameBuffer] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same metadata, different frames (geometry may differ).
    pub fn with_frames(&self, width: usize, height: usize, frames: Vec<FrameBuffer>) -> Result<Self> {
        Self::new(width, height, self.fps, self.projection, self.face, frames)
    }

    /// Retag as a cubemap face (or back to ERP with `None`).
    pub fn retagged(self, face: Option<FaceId>) -> Result<Self> {
        let projection = if face.is_some() {
            Projection::CmpFace
        } else {
            Projection::Erp
        };
        Self::new(self.width, self.height, self.fps, projection, face, self.frames)
    }

    /// Keeps at most `n` leading frames.
    pub fn truncated(mut self, n: usize) -> Self {
        self.frames.truncate(n);
        self
    }
}

/// Parsed Y4M stream header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps: Rational,
    pub projection: Projection,
    pub face: Option<FaceId>,
}

fn parse_header(line: &str) -> Result<Y4mHeader> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(Y4M_MAGIC) {
        return Err(Error::MalformedHeader("missing YUV4MPEG2 magic".into()));
    }
    let mut width = None;
    let mut height = None;
    let mut fps = None;
    let mut projection = Projection::Erp;
    let mut face = None;
    for tok in tokens {
        let (tag, val) = tok.split_at(1);
        match tag {
            "W" => width = Some(val.parse::<usize>().map_err(|_| bad_tok(tok))?),
            "H" => height = Some(val.parse::<usize>().map_err(|_| bad_tok(tok))?),
            "F" => {
                let (n, d) = val.split_once(':').ok_or_else(|| bad_tok(tok))?;
                let n = n.parse().map_err(|_| bad_tok(tok))?;
                let d = d.parse().map_err(|_| bad_tok(tok))?;
                fps = Some(Rational::new(n, d).map_err(|_| bad_tok(tok))?);
            }
            "C" => match val {
                "420" | "420jpeg" | "420paldv" | "420mpeg2" => {}
                other => return Err(Error::UnsupportedColorspace(other.to_string())),
            },
            "X" => {
                if let Some(p) = val.strip_prefix("PROJ=") {
                    (projection, face) = parse_projection_tag(p).ok_or_else(|| bad_tok(tok))?;
                }
            }
            // interlacing, aspect ratio and unknown tags carry nothing we need
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::MalformedHeader("missing W".into()))?;
    let height = height.ok_or_else(|| Error::MalformedHeader("missing H".into()))?;
    let fps = fps.ok_or_else(|| Error::MalformedHeader("missing F".into()))?;
    check_geometry(width, height).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(Y4mHeader {
        width,
        height,
        fps,
        projection,
        face,
    })
}

fn bad_tok(tok: &str) -> Error {
    Error::MalformedHeader(format!("bad token `{tok}`"))
}

fn parse_projection_tag(s: &str) -> Option<(Projection, Option<FaceId>)> {
    match s.split_once(':') {
        None if s == "ERP" => Some((Projection::Erp, None)),
        Some(("CMP", face)) => Some((Projection::CmpFace, Some(face.parse().ok()?))),
        _ => None,
    }
}

/// Streaming Y4M reader yielding one frame at a time.
pub struct Y4mReader<R> {
    inner: R,
    header: Y4mHeader,
    index: usize,
    done: bool,
}

impl Y4mReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut line = Vec::new();
        inner
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::MalformedHeader(e.to_string()))?;
        if line.last() != Some(&b'\n') {
            return Err(Error::MalformedHeader("unterminated header".into()));
        }
        let text = std::str::from_utf8(&line[..line.len() - 1])
            .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
        let header = parse_header(text)?;
        Ok(Y4mReader {
            inner,
            header,
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> Y4mHeader {
        self.header
    }

    fn next_frame(&mut self) -> Result<Option<FrameBuffer>> {
        let mut marker = Vec::new();
        let n = self
            .inner
            .read_until(b'\n', &mut marker)
            .map_err(|e| Error::MalformedHeader(e.to_string()))?;
        if n == 0 {
            return Ok(None);
        }
        if !marker.starts_with(FRAME_MAGIC) || marker.last() != Some(&b'\n') {
            return Err(Error::MalformedHeader(format!(
                "expected FRAME marker before frame {}",
                self.index
            )));
        }
        let Y4mHeader { width, height, .. } = self.header;
        let expected = FrameBuffer::frame_bytes(width, height);
        let mut payload = vec![0u8; expected];
        let mut filled = 0;
        while filled < expected {
            match self.inner.read(&mut payload[filled..]) {
                Ok(0) => break,
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::MalformedHeader(e.to_string())),
            }
        }
        if filled < expected {
            return Err(Error::TruncatedPayload {
                frame: self.index,
                expected,
                found: filled,
            });
        }
        self.index += 1;
        split_planes(width, height, payload).map(Some)
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<FrameBuffer>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.next_frame().transpose();
        if !matches!(out, Some(Ok(_))) {
            self.done = true;
        }
        out
    }
}

fn split_planes(width: usize, height: usize, mut payload: Vec<u8>) -> Result<FrameBuffer> {
    let luma = width * height;
    let chroma = luma / 4;
    let cr = payload.split_off(luma + chroma);
    let cb = payload.split_off(luma);
    FrameBuffer::new(width, height, payload, cb, cr)
}

/// Reads a whole Y4M file into memory.
pub fn read_y4m(path: &Path) -> Result<VideoSequence> {
    let reader = Y4mReader::open(path)?;
    let h = reader.header();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    VideoSequence::new(h.width, h.height, h.fps, h.projection, h.face, frames)
}

/// Reads headerless planar I420. Geometry and frame rate must be supplied.
pub fn read_raw_yuv(path: &Path, width: usize, height: usize, fps: Rational) -> Result<VideoSequence> {
    check_geometry(width, height)?;
    let frame_size = FrameBuffer::frame_bytes(width, height) as u64;
    let size = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    if size % frame_size != 0 {
        return Err(Error::SizeMismatch { size, frame_size });
    }
    let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let count = (size / frame_size) as usize;
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let mut payload = vec![0u8; frame_size as usize];
        reader.read_exact(&mut payload).map_err(|e| Error::io(path, e))?;
        frames.push(split_planes(width, height, payload)?);
    }
    VideoSequence::erp(width, height, fps, frames)
}

/// Reads either format, choosing by extension (`.y4m` vs anything else).
pub fn read_video(path: &Path, raw: Option<(usize, usize, Rational)>) -> Result<VideoSequence> {
    let is_y4m = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    match (is_y4m, raw) {
        (true, _) => read_y4m(path),
        (false, Some((w, h, fps))) => read_raw_yuv(path, w, h, fps),
        (false, None) => Err(Error::Geometry(format!(
            "{} is headerless; --width, --height and --fps are required",
            path.display()
        ))),
    }
}

fn header_line(seq: &VideoSequence) -> String {
    let proj = match (seq.projection(), seq.face()) {
        (Projection::CmpFace, Some(face)) => format!("CMP:{face}"),
        _ => "ERP".to_string(),
    };
    format!(
        "{Y4M_MAGIC} W{} H{} F{} Ip A1:1 C420 XPROJ={proj}\n",
        seq.width(),
        seq.height(),
        seq.fps()
    )
}

/// Serializes a sequence as Y4M into any writer; returns bytes written.
pub fn write_y4m_to<W: Write>(seq: &VideoSequence, mut out: W) -> std::io::Result<u64> {
    let header = header_line(seq);
    out.write_all(header.as_bytes())?;
    let mut written = header.len() as u64;
    for frame in seq.frames() {
        out.write_all(b"FRAME\n")?;
        written += 6;
        for plane in frame.planes() {
            out.write_all(plane)?;
            written += plane.len() as u64;
        }
    }
    out.flush()?;
    Ok(written)
}

/// Writes a sequence as a Y4M file and returns the byte count.
pub fn write_y4m(seq: &VideoSequence, path: &Path) -> Result<u64> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_y4m_to(seq, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fps30() -> Rational {
        Rational::new(30, 1).unwrap()
    }

    fn ramp_frame(w: usize, h: usize, seed: u8) -> FrameBuffer {
        let y = (0..w * h).map(|i| (i as u8).wrapping_mul(7).wrapping_add(seed)).collect();
        let cb = (0..w * h / 4).map(|i| (i as u8).wrapping_add(seed)).collect();
        let cr = (0..w * h / 4).map(|i| (i as u8) ^ seed).collect();
        FrameBuffer::new(w, h, y, cb, cr).unwrap()
    }

    #[test]
    fn parses_header_fields() {
        let data = b"YUV4MPEG2 W64 H32 F30:1 Ip A1:1 C420\n".to_vec();
        let reader = Y4mReader::new(Cursor::new(data)).unwrap();
        let h = reader.header();
        assert_eq!((h.width, h.height), (64, 32));
        assert_eq!(h.fps, Rational::new(30, 1).unwrap());
        assert_eq!(h.projection, Projection::Erp);
    }

    #[test]
    fn zero_frames_is_empty_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.y4m");
        std::fs::write(&p, b"YUV4MPEG2 W64 H32 F30:1 C420jpeg\n").unwrap();
        let seq = read_y4m(&p).unwrap();
        assert!(seq.is_empty());
        assert_eq!((seq.width(), seq.height()), (64, 32));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut data = b"YUV4MPEG2 W64 H32 F30:1 C420\nFRAME\n".to_vec();
        data.extend(std::iter::repeat_n(0u8, 1000));
        let err = Y4mReader::new(Cursor::new(data))
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { frame: 0, expected: 3072, found: 1000 }));
    }

    #[test]
    fn rejects_other_colorspaces_and_bad_magic() {
        let err = Y4mReader::new(Cursor::new(b"YUV4MPEG2 W64 H32 F30:1 C444\n".to_vec())).err();
        assert!(matches!(err, Some(Error::UnsupportedColorspace(_))));
        let err = Y4mReader::new(Cursor::new(b"YUV4MPEG2 W64 H32 F30:1 C420p10\n".to_vec())).err();
        assert!(matches!(err, Some(Error::UnsupportedColorspace(_))));
        let err = Y4mReader::new(Cursor::new(b"RIFF W64 H32 F30:1\n".to_vec())).err();
        assert!(matches!(err, Some(Error::MalformedHeader(_))));
        let err = Y4mReader::new(Cursor::new(b"YUV4MPEG2 W64 F30:1\n".to_vec())).err();
        assert!(matches!(err, Some(Error::MalformedHeader(_))));
    }

    #[test]
    fn raw_frame_count_from_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.yuv");
        std::fs::write(&p, vec![16u8; 9216]).unwrap();
        assert_eq!(read_raw_yuv(&p, 64, 32, fps30()).unwrap().len(), 3);

        std::fs::write(&p, vec![16u8; 9217]).unwrap();
        assert!(matches!(
            read_raw_yuv(&p, 64, 32, fps30()),
            Err(Error::SizeMismatch { size: 9217, frame_size: 3072 })
        ));

        std::fs::write(&p, b"").unwrap();
        assert!(read_raw_yuv(&p, 64, 32, fps30()).unwrap().is_empty());
    }

    #[test]
    fn single_8k_frame_size_arithmetic() {
        assert_eq!(FrameBuffer::frame_bytes(8192, 4096), 50_331_648);
    }

    #[test]
    fn write_one_frame_byte_count() {
        let seq = VideoSequence::erp(64, 32, fps30(), vec![ramp_frame(64, 32, 1)]).unwrap();
        let mut buf = Vec::new();
        let n = write_y4m_to(&seq, &mut buf).unwrap();
        let header_len = header_line(&seq).len() as u64;
        assert_eq!(n, header_len + 6 + 3072);
        assert_eq!(n as usize, buf.len());
        assert_eq!(buf.windows(5).filter(|w| *w == b"FRAME").count(), 1);
    }

    #[test]
    fn empty_sequence_writes_header_only() {
        let seq = VideoSequence::erp(64, 32, fps30(), vec![]).unwrap();
        let mut buf = Vec::new();
        write_y4m_to(&seq, &mut buf).unwrap();
        assert_eq!(buf, header_line(&seq).into_bytes());
    }

    #[test]
    fn roundtrip_preserves_face_tag() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("face.y4m");
        let seq = VideoSequence::new(
            16,
            16,
            Rational::new(30000, 1001).unwrap(),
            Projection::CmpFace,
            Some(FaceId::Bottom),
            vec![ramp_frame(16, 16, 3), ramp_frame(16, 16, 9)],
        )
        .unwrap();
        write_y4m(&seq, &p).unwrap();
        assert_eq!(read_y4m(&p).unwrap(), seq);
    }

    #[test]
    fn frame_invariants_enforced() {
        assert!(FrameBuffer::new(3, 2, vec![0; 6], vec![0; 1], vec![0; 1]).is_err());
        assert!(FrameBuffer::new(4, 2, vec![0; 8], vec![0; 1], vec![0; 2]).is_err());
        assert!(FrameBuffer::filled(0, 2, 0, 0, 0).is_err());
        let f = ramp_frame(4, 2, 0);
        assert!(VideoSequence::erp(8, 2, fps30(), vec![f.clone()]).is_err());
        assert!(VideoSequence::new(4, 2, fps30(), Projection::CmpFace, None, vec![f]).is_err());
    }

    #[test]
    fn rational_parsing() {
        assert_eq!("30".parse::<Rational>().unwrap(), Rational::new(30, 1).unwrap());
        assert_eq!("30000/1001".parse::<Rational>().unwrap(), Rational::new(30000, 1001).unwrap());
        assert!("0:1".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
    }
}
