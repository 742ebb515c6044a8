/// One copy of `pkt` per path, in path order.
pub fn duplicate_multipath_schedule<P: Clone>(pkt: P, paths: usize) -> Vec<(usize, P)> {
    (0..paths).map(|i| (i, pkt.clone())).collect()
}
