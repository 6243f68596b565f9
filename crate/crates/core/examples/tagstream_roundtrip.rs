//! Write a small stream, read it back, and merge two sorted streams.

use biphoton::tagstream::{merge_sorted, read_all, write_stream, ChannelMap, StreamHeader, TimeTag};

fn main() -> biphoton::Result<()> {
    let map = ChannelMap::default();
    let a = vec![TimeTag::new(map.sync, 0), TimeTag::new(map.mcp, 200), TimeTag::new(map.dld_x1, 1800)];
    let b = vec![TimeTag::new(map.dld_x2, 1000), TimeTag::new(map.snspd, 308_200)];
    let tags = merge_sorted(&[&a, &b]);
    let header = StreamHeader::new(25, map).with_record_count(tags.len() as u64);
    let mut buf = Vec::new();
    let bytes = write_stream(&header, &tags, &mut buf)?;
    let (h, back) = read_all(buf.as_slice())?;
    println!("{bytes} bytes, {} records, tick {} ps", h.record_count, h.tick_ps);
    for t in &back {
        println!("ch {}  t = {} ticks", t.channel, t.timestamp);
    }
    assert_eq!(back, tags);
    Ok(())
}
