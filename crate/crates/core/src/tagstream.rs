//! Time-tag data model and the `.ttag` binary stream format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! header (34 bytes)
//!   magic         4   "TTAG"
//!   version       2   u16 = 1
//!   tick_ps       4   u32, picoseconds per tick
//!   channel_count 2   u16
//!   channel_map  14   7 x u16: mcp, dld_x1, dld_x2, dld_y1, dld_y2, snspd, sync
//!   record_count  8   u64, 0 = unknown / streaming
//! records (12 bytes each)
//!   channel       2   u16
//!   reserved      2   zero
//!   timestamp     8   u64 ticks
//! ```
//!
//! Streams are globally sorted by timestamp, ties broken by ascending channel.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 34;
pub const RECORD_LEN: usize = 12;
pub const DEFAULT_TICK_PS: u32 = 25;

pub type ChannelId = u16;

/// One detector event: channel plus timestamp in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub timestamp: u64,
    pub channel: ChannelId,
}

impl TimeTag {
    pub const fn new(channel: ChannelId, timestamp: u64) -> Self {
        Self { timestamp, channel }
    }

    /// Stream ordering key.
    #[inline]
    pub fn key(&self) -> (u64, ChannelId) {
        (self.timestamp, self.channel)
    }
}

impl PartialOrd for TimeTag {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeTag {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// Roles of the seven instrument channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelMap {
    pub mcp: ChannelId,
    pub dld_x1: ChannelId,
    pub dld_x2: ChannelId,
    pub dld_y1: ChannelId,
    pub dld_y2: ChannelId,
    pub snspd: ChannelId,
    pub sync: ChannelId,
}

impl Default for ChannelMap {
    /// DLD on the first five inputs, SNSPD sixth, laser sync seventh.
    fn default() -> Self {
        Self { mcp: 0, dld_x1: 1, dld_x2: 2, dld_y1: 3, dld_y2: 4, snspd: 5, sync: 6 }
    }
}

impl ChannelMap {
    pub fn ids(&self) -> [ChannelId; 7] {
        [self.mcp, self.dld_x1, self.dld_x2, self.dld_y1, self.dld_y2, self.snspd, self.sync]
    }

    pub fn validate(&self) -> Result<()> {
        let ids = self.ids();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if ids[i] == ids[j] {
                    return Err(Error::InvalidHeader(format!(
                        "channel map assigns id {} to two roles",
                        ids[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn max_id(&self) -> ChannelId {
        self.ids().into_iter().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub version: u16,
    pub tick_ps: u32,
    pub channel_count: u16,
    pub channel_map: ChannelMap,
    pub record_count: u64,
}

impl Default for StreamHeader {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION,
            tick_ps: DEFAULT_TICK_PS,
            channel_count: 7,
            channel_map: ChannelMap::default(),
            record_count: 0,
        }
    }
}

impl StreamHeader {
    pub fn new(tick_ps: u32, channel_map: ChannelMap) -> Self {
        Self { tick_ps, channel_map, ..Self::default() }
    }

    pub fn with_record_count(mut self, n: u64) -> Self {
        self.record_count = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.tick_ps < 1 {
            return Err(Error::InvalidHeader("tick_ps must be >= 1".into()));
        }
        if self.channel_count < 7 {
            return Err(Error::InvalidHeader(format!(
                "channel_count {} < 7",
                self.channel_count
            )));
        }
        self.channel_map.validate()?;
        if self.channel_map.max_id() >= self.channel_count {
            return Err(Error::InvalidHeader(format!(
                "channel map id {} not below channel_count {}",
                self.channel_map.max_id(),
                self.channel_count
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.tick_ps.to_le_bytes());
        b[10..12].copy_from_slice(&self.channel_count.to_le_bytes());
        for (k, id) in self.channel_map.ids().iter().enumerate() {
            b[12 + 2 * k..14 + 2 * k].copy_from_slice(&id.to_le_bytes());
        }
        b[26..34].copy_from_slice(&self.record_count.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic, expected: MAGIC });
        }
        let u16_at = |o: usize| u16::from_le_bytes([b[o], b[o + 1]]);
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let header = Self {
            version,
            tick_ps: u32::from_le_bytes(b[6..10].try_into().unwrap()),
            channel_count: u16_at(10),
            channel_map: ChannelMap {
                mcp: u16_at(12),
                dld_x1: u16_at(14),
                dld_x2: u16_at(16),
                dld_y1: u16_at(18),
                dld_y2: u16_at(20),
                snspd: u16_at(22),
                sync: u16_at(24),
            },
            record_count: u64::from_le_bytes(b[26..34].try_into().unwrap()),
        };
        header.validate()?;
        Ok(header)
    }
}

/// Index of the first tag that breaks (timestamp, channel) ordering.
pub fn first_unsorted(tags: &[TimeTag]) -> Option<usize> {
    tags.windows(2).position(|w| w[1].key() < w[0].key()).map(|i| i + 1)
}

#[inline]
fn encode_record(tag: &TimeTag) -> [u8; RECORD_LEN] {
    let mut r = [0u8; RECORD_LEN];
    r[0..2].copy_from_slice(&tag.channel.to_le_bytes());
    r[4..12].copy_from_slice(&tag.timestamp.to_le_bytes());
    r
}

/// Writes `header` followed by `tags`. Returns the number of bytes written.
///
/// `header.record_count` must be 0 (streaming) or equal to `tags.len()`.
pub fn write_stream<W: Write>(header: &StreamHeader, tags: &[TimeTag], sink: W) -> Result<u64> {
    header.validate()?;
    if header.record_count != 0 && header.record_count != tags.len() as u64 {
        return Err(Error::RecordCount {
            declared: header.record_count,
            actual: tags.len() as u64,
        });
    }
    let mut w = TagWriter::new(sink, header)?;
    for tag in tags {
        w.push(*tag)?;
    }
    w.finish()
}

/// Incremental writer enforcing ordering and channel range.
pub struct TagWriter<W: Write> {
    sink: io::BufWriter<W>,
    channel_count: u16,
    last: Option<(u64, ChannelId)>,
    written: u64,
    bytes: u64,
}

impl<W: Write> TagWriter<W> {
    pub fn new(sink: W, header: &StreamHeader) -> Result<Self> {
        header.validate()?;
        let mut sink = io::BufWriter::with_capacity(1 << 16, sink);
        sink.write_all(&header.to_bytes())?;
        Ok(Self {
            sink,
            channel_count: header.channel_count,
            last: None,
            written: 0,
            bytes: HEADER_LEN as u64,
        })
    }

    pub fn push(&mut self, tag: TimeTag) -> Result<()> {
        let index = self.written as usize;
        if tag.channel >= self.channel_count {
            return Err(Error::UnknownChannel {
                index,
                channel: tag.channel,
                channel_count: self.channel_count,
            });
        }
        if let Some(prev) = self.last {
            if tag.key() < prev {
                return Err(Error::Unsorted { index });
            }
        }
        self.sink.write_all(&encode_record(&tag))?;
        self.last = Some(tag.key());
        self.written += 1;
        self.bytes += RECORD_LEN as u64;
        Ok(())
    }

    /// Flushes and returns the total byte count.
    pub fn finish(mut self) -> Result<u64> {
        self.sink.flush()?;
        Ok(self.bytes)
    }
}

/// Opens a stream: parses the header and returns a lazy record iterator.
pub fn read_stream<R: Read>(source: R) -> Result<(StreamHeader, TagReader<R>)> {
    let mut src = io::BufReader::with_capacity(1 << 16, source);
    let mut hb = [0u8; HEADER_LEN];
    let got = read_full(&mut src, &mut hb)?;
    if got >= 4 && hb[0..4] != MAGIC {
        return Err(Error::BadMagic { found: hb[0..4].try_into().unwrap(), expected: MAGIC });
    }
    if got < HEADER_LEN {
        return Err(Error::Truncated { offset: 0, needed: HEADER_LEN, found: got });
    }
    let header = StreamHeader::from_bytes(&hb)?;
    let reader = TagReader {
        src,
        channel_count: header.channel_count,
        declared: header.record_count,
        index: 0,
        offset: HEADER_LEN as u64,
        done: false,
    };
    Ok((header, reader))
}

/// Reads a whole stream into memory.
pub fn read_all<R: Read>(source: R) -> Result<(StreamHeader, Vec<TimeTag>)> {
    let (header, reader) = read_stream(source)?;
    let mut tags = Vec::with_capacity(header.record_count.min(1 << 28) as usize);
    for tag in reader {
        tags.push(tag?);
    }
    Ok((header, tags))
}

fn read_full<R: Read>(src: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match src.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

/// Single-pass record iterator; holds one buffered block, never the whole stream.
pub struct TagReader<R: Read> {
    src: io::BufReader<R>,
    channel_count: u16,
    declared: u64,
    index: u64,
    offset: u64,
    done: bool,
}

impl<R: Read> TagReader<R> {
    fn next_record(&mut self) -> Result<Option<TimeTag>> {
        let mut rec = [0u8; RECORD_LEN];
        let got = read_full(&mut self.src, &mut rec)?;
        if got == 0 {
            if self.declared != 0 && self.index != self.declared {
                return Err(Error::RecordCount { declared: self.declared, actual: self.index });
            }
            return Ok(None);
        }
        if got < RECORD_LEN {
            return Err(Error::Truncated { offset: self.offset, needed: RECORD_LEN, found: got });
        }
        let channel = u16::from_le_bytes([rec[0], rec[1]]);
        if channel >= self.channel_count {
            return Err(Error::UnknownChannel {
                index: self.index as usize,
                channel,
                channel_count: self.channel_count,
            });
        }
        let timestamp = u64::from_le_bytes(rec[4..12].try_into().unwrap());
        self.index += 1;
        self.offset += RECORD_LEN as u64;
        if self.declared != 0 && self.index > self.declared {
            return Err(Error::RecordCount { declared: self.declared, actual: self.index });
        }
        Ok(Some(TimeTag { timestamp, channel }))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TimeTag>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// K-way merge of individually sorted tag sequences.
pub fn merge_sorted(streams: &[&[TimeTag]]) -> Vec<TimeTag> {
    let total = streams.iter().map(|s| s.len()).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap = BinaryHeap::with_capacity(streams.len());
    for (k, s) in streams.iter().enumerate() {
        if let Some(t) = s.first() {
            heap.push(Reverse((t.key(), k, 0usize)));
        }
    }
    while let Some(Reverse((_, k, i))) = heap.pop() {
        out.push(streams[k][i]);
        if let Some(t) = streams[k].get(i + 1) {
            heap.push(Reverse((t.key(), k, i + 1)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hdr() -> StreamHeader {
        StreamHeader::default()
    }

    #[test]
    fn header_is_34_bytes_and_round_trips() {
        let h = hdr().with_record_count(3);
        let b = h.to_bytes();
        assert_eq!(b.len(), 34);
        assert_eq!(&b[0..4], b"TTAG");
        assert_eq!(StreamHeader::from_bytes(&b).unwrap(), h);
    }

    #[test]
    fn empty_stream_is_header_only() {
        let mut buf = Vec::new();
        let n = write_stream(&hdr(), &[], &mut buf).unwrap();
        assert_eq!(n, 34);
        assert_eq!(buf.len(), 34);
        let (h, tags) = read_all(&buf[..]).unwrap();
        assert_eq!(h.record_count, 0);
        assert!(tags.is_empty());
    }

    #[test]
    fn single_zero_tag_is_twelve_zero_bytes() {
        let mut buf = Vec::new();
        let n = write_stream(&hdr(), &[TimeTag::new(0, 0)], &mut buf).unwrap();
        assert_eq!(n, 46);
        assert_eq!(&buf[34..], &[0u8; 12]);
    }

    #[test]
    fn record_layout_is_little_endian() {
        let mut buf = Vec::new();
        write_stream(&hdr(), &[TimeTag::new(5, 0x0102_0304_0506_0708)], &mut buf).unwrap();
        assert_eq!(&buf[34..], &[5, 0, 0, 0, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn equal_timestamps_descending_channel_rejected_at_index_1() {
        let tags = [TimeTag::new(3, 100), TimeTag::new(1, 100)];
        // oracle: pairwise comparison scan
        let oracle = (1..tags.len()).find(|&i| {
            let (a, b) = (tags[i - 1], tags[i]);
            b.timestamp < a.timestamp || (b.timestamp == a.timestamp && b.channel < a.channel)
        });
        assert_eq!(oracle, Some(1));
        let err = write_stream(&hdr(), &tags, Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Unsorted { index: 1 }));
        assert_eq!(first_unsorted(&tags), Some(1));
    }

    #[test]
    fn channel_outside_map_rejected() {
        let err = write_stream(&hdr(), &[TimeTag::new(7, 1)], Vec::new()).unwrap_err();
        assert!(matches!(err, Error::UnknownChannel { index: 0, channel: 7, .. }));
    }

    #[test]
    fn truncated_mid_record_names_offset() {
        let tags = [TimeTag::new(0, 10), TimeTag::new(1, 20)];
        let mut buf = Vec::new();
        write_stream(&hdr(), &tags, &mut buf).unwrap();
        let cut = &buf[..HEADER_LEN + 6];
        let (_, mut rd) = read_stream(cut).unwrap();
        let err = rd.next().unwrap().unwrap_err();
        match err {
            Error::Truncated { offset, needed, found } => {
                assert_eq!(offset, 34);
                assert_eq!(needed, 12);
                assert_eq!(found, 6);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version_are_distinct() {
        let mut b = hdr().to_bytes();
        b[0] = b'X';
        assert!(matches!(read_stream(&b[..]), Err(Error::BadMagic { .. })));
        let mut b = hdr().to_bytes();
        b[4] = 9;
        assert!(matches!(read_stream(&b[..]), Err(Error::UnsupportedVersion(9))));
        assert!(matches!(read_stream(&b"TTA"[..]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn header_invariants() {
        let mut h = hdr();
        h.tick_ps = 0;
        assert!(h.validate().is_err());
        let mut h = hdr();
        h.channel_count = 6;
        assert!(h.validate().is_err());
        let mut h = hdr();
        h.channel_map.sync = h.channel_map.mcp;
        assert!(h.validate().is_err());
    }

    #[test]
    fn declared_count_must_match() {
        let tags = [TimeTag::new(0, 1)];
        assert!(write_stream(&hdr().with_record_count(2), &tags, Vec::new()).is_err());
        let mut buf = Vec::new();
        write_stream(&hdr().with_record_count(1), &tags, &mut buf).unwrap();
        // patch header to claim two records
        buf[26] = 2;
        let (_, rd) = read_stream(&buf[..]).unwrap();
        let res: Result<Vec<_>> = rd.collect();
        assert!(matches!(res, Err(Error::RecordCount { declared: 2, actual: 1 })));
    }

    #[test]
    fn merge_trivial_cases() {
        assert!(merge_sorted(&[&[], &[]]).is_empty());
        let a = [TimeTag::new(2, 5)];
        assert_eq!(merge_sorted(&[&a, &[]]), a.to_vec());
    }

    fn sorted_tags(max_len: usize) -> impl Strategy<Value = Vec<TimeTag>> {
        prop::collection::vec((0u16..7, 0u64..5_000), 0..max_len).prop_map(|v| {
            let mut t: Vec<_> = v.into_iter().map(|(c, ts)| TimeTag::new(c, ts)).collect();
            t.sort();
            t
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_determinism(tags in sorted_tags(300), tick in 1u32..1000) {
            let h = StreamHeader::new(tick, ChannelMap::default()).with_record_count(tags.len() as u64);
            let mut a = Vec::new();
            let mut b = Vec::new();
            write_stream(&h, &tags, &mut a).unwrap();
            write_stream(&h, &tags, &mut b).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), HEADER_LEN + RECORD_LEN * tags.len());
            let (h2, t2) = read_all(&a[..]).unwrap();
            prop_assert_eq!(h2, h);
            prop_assert_eq!(t2, tags);
        }

        #[test]
        fn merge_equals_sorted_concatenation(
            a in sorted_tags(200), b in sorted_tags(200), c in sorted_tags(200)
        ) {
            let merged = merge_sorted(&[&a, &b, &c]);
            let mut all: Vec<_> = a.iter().chain(&b).chain(&c).copied().collect();
            all.sort();
            prop_assert_eq!(&merged, &all);
            // associativity up to ordering and multiset
            let ab = merge_sorted(&[&a, &b]);
            prop_assert_eq!(merge_sorted(&[&ab, &c]), merged);
        }
    }
}
