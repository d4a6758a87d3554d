//! Per-rank program generators. Every builder emits, per step, sends before
//! receives before local work, so sends never wait on the matching receive.

use super::schedule::{Action, Buffer, RankProgram, Region, Schedule, Tag};
use super::AlgorithmId;

const RS: &str = "reduce-scatter";
const AG: &str = "allgather";
const EX: &str = "exchange";

struct Prog {
    rank: usize,
    width: usize,
    steps: Vec<Vec<Action>>,
}

impl Prog {
    fn new(rank: usize, width: usize, nsteps: usize) -> Self {
        Prog {
            rank,
            width,
            steps: vec![Vec::new(); nsteps],
        }
    }

    fn alloc(&mut self, step: usize, buffer: Buffer, elems: usize) {
        self.steps[step].push(Action::Alloc {
            bytes: elems * self.width,
            buffer,
        });
    }

    fn copy(&mut self, step: usize, src: Region, dst: Region) {
        self.steps[step].push(Action::Copy {
            bytes: src.len() * self.width,
            src,
            dst,
        });
    }

    fn send(&mut self, step: usize, peer: usize, src: Region) {
        let tag = Tag { step, src: self.rank, dst: peer };
        self.steps[step].push(Action::Send {
            peer,
            bytes: src.len() * self.width,
            tag,
            src,
        });
    }

    fn recv(&mut self, step: usize, peer: usize, dst: Region) {
        let tag = Tag { step, src: peer, dst: self.rank };
        self.steps[step].push(Action::Recv {
            peer,
            bytes: dst.len() * self.width,
            tag,
            dst,
        });
    }

    fn reduce(&mut self, step: usize, src: Region, dst: Region) {
        self.steps[step].push(Action::ReduceLocal {
            elements: src.len(),
            src,
            dst,
        });
    }

    fn finish(self, input_elems: usize, result: Region) -> RankProgram {
        RankProgram {
            input_elems,
            result,
            steps: self.steps,
        }
    }
}

fn work(offset: usize, len: usize) -> Region {
    Region::contiguous(Buffer::Work, offset, len)
}

fn scratch(len: usize) -> Region {
    Region::contiguous(Buffer::Scratch, 0, len)
}

fn input(offset: usize, len: usize) -> Region {
    Region::contiguous(Buffer::Input, offset, len)
}

fn log2(p: usize) -> usize {
    p.trailing_zeros() as usize
}

pub(super) fn build(alg: AlgorithmId, p: usize, n: usize, width: usize, msg_bytes: usize) -> Schedule {
    let (labels, ranks): (Vec<&str>, Vec<RankProgram>) = match alg {
        AlgorithmId::AllreduceRing => (
            [vec![RS; p - 1], vec![AG; p - 1]].concat(),
            (0..p).map(|r| allreduce_ring(r, p, n, width)).collect(),
        ),
        AlgorithmId::AllreduceRecursiveDoubling => (
            vec![EX; log2(p)],
            (0..p).map(|r| allreduce_recursive_doubling(r, p, n, width)).collect(),
        ),
        AlgorithmId::AllreduceRabenseifner => (
            [vec![RS; log2(p)], vec![AG; log2(p)]].concat(),
            (0..p).map(|r| allreduce_rabenseifner(r, p, n, width)).collect(),
        ),
        AlgorithmId::ReduceScatterDistanceHalving => (
            vec![RS; log2(p)],
            (0..p).map(|r| reduce_scatter_halving(r, p, n, width)).collect(),
        ),
        AlgorithmId::ReduceScatterDistanceDoubling => (
            vec![RS; log2(p)],
            (0..p).map(|r| reduce_scatter_doubling(r, p, n, width)).collect(),
        ),
        AlgorithmId::ReduceScatterRing => (
            vec![RS; p - 1],
            (0..p).map(|r| reduce_scatter_ring(r, p, n, width)).collect(),
        ),
        AlgorithmId::AllgatherRing => (
            vec![AG; p - 1],
            (0..p).map(|r| allgather_ring(r, p, n, width)).collect(),
        ),
        AlgorithmId::AllgatherDistanceDoubling => (
            vec![AG; log2(p)],
            (0..p).map(|r| allgather_doubling(r, p, n, width)).collect(),
        ),
        AlgorithmId::AlltoallPairwise => (
            vec![EX; p - 1],
            (0..p).map(|r| alltoall_pairwise(r, p, n, width)).collect(),
        ),
    };
    Schedule {
        algorithm: alg,
        p,
        msg_bytes,
        element_width: width,
        step_labels: labels.into_iter().map(String::from).collect(),
        ranks,
    }
}

/// Ring reduce-scatter over `p - 1` steps starting at `first`; afterwards
/// rank `r` holds the fully reduced block `r`.
fn ring_reduce_scatter(prog: &mut Prog, first: usize, p: usize, k: usize) {
    let r = prog.rank;
    let (right, left) = ((r + 1) % p, (r + p - 1) % p);
    for s in 0..p - 1 {
        let step = first + s;
        let send_block = (r + 2 * p - s - 1) % p;
        let recv_block = (r + 2 * p - s - 2) % p;
        prog.send(step, right, work(send_block * k, k));
        prog.recv(step, left, scratch(k));
        prog.reduce(step, scratch(k), work(recv_block * k, k));
    }
}

/// Ring allgather over `p - 1` steps starting at `first`, assuming rank `r`
/// holds block `r` of the work buffer.
fn ring_allgather(prog: &mut Prog, first: usize, p: usize, k: usize) {
    let r = prog.rank;
    let (right, left) = ((r + 1) % p, (r + p - 1) % p);
    for s in 0..p - 1 {
        let step = first + s;
        let send_block = (r + p - s) % p;
        let recv_block = (r + 2 * p - s - 1) % p;
        prog.send(step, right, work(send_block * k, k));
        prog.recv(step, left, work(recv_block * k, k));
    }
}

/// Recursive-halving reduce-scatter on contiguous windows, partners at
/// distance `p/2, p/4, .., 1`. Returns the offset of the block kept.
fn halving_reduce_scatter(prog: &mut Prog, first: usize, p: usize, n: usize) -> usize {
    let r = prog.rank;
    let (mut lo, mut len) = (0, n);
    let mut mask = p / 2;
    let mut step = first;
    while mask > 0 {
        let partner = r ^ mask;
        let half = len / 2;
        let (keep, give) = if r & mask == 0 { (lo, lo + half) } else { (lo + half, lo) };
        prog.send(step, partner, work(give, half));
        prog.recv(step, partner, scratch(half));
        prog.reduce(step, scratch(half), work(keep, half));
        lo = keep;
        len = half;
        mask /= 2;
        step += 1;
    }
    lo
}

/// Recursive-doubling allgather on contiguous windows, partners at distance
/// `1, 2, .., p/2`, starting from the block at `lo` of `len` elements.
fn doubling_allgather(prog: &mut Prog, first: usize, p: usize, mut lo: usize, mut len: usize) {
    let r = prog.rank;
    let mut mask = 1;
    let mut step = first;
    while mask < p {
        let partner = r ^ mask;
        let theirs = if r & mask == 0 { lo + len } else { lo - len };
        prog.send(step, partner, work(lo, len));
        prog.recv(step, partner, work(theirs, len));
        lo = lo.min(theirs);
        len *= 2;
        mask *= 2;
        step += 1;
    }
}

fn allreduce_ring(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let k = n / p;
    let mut prog = Prog::new(r, width, 2 * (p - 1));
    prog.alloc(0, Buffer::Work, n);
    prog.alloc(0, Buffer::Scratch, k);
    prog.copy(0, input(0, n), work(0, n));
    ring_reduce_scatter(&mut prog, 0, p, k);
    ring_allgather(&mut prog, p - 1, p, k);
    prog.finish(n, work(0, n))
}

fn allreduce_recursive_doubling(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let mut prog = Prog::new(r, width, log2(p));
    prog.alloc(0, Buffer::Work, n);
    prog.alloc(0, Buffer::Scratch, n);
    prog.copy(0, input(0, n), work(0, n));
    for i in 0..log2(p) {
        let partner = r ^ (1 << i);
        prog.send(i, partner, work(0, n));
        prog.recv(i, partner, scratch(n));
        prog.reduce(i, scratch(n), work(0, n));
    }
    prog.finish(n, work(0, n))
}

fn allreduce_rabenseifner(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let lg = log2(p);
    let mut prog = Prog::new(r, width, 2 * lg);
    prog.alloc(0, Buffer::Work, n);
    prog.alloc(0, Buffer::Scratch, n / 2);
    prog.copy(0, input(0, n), work(0, n));
    let lo = halving_reduce_scatter(&mut prog, 0, p, n);
    doubling_allgather(&mut prog, lg, p, lo, n / p);
    prog.finish(n, work(0, n))
}

fn reduce_scatter_halving(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let mut prog = Prog::new(r, width, log2(p));
    prog.alloc(0, Buffer::Work, n);
    prog.alloc(0, Buffer::Scratch, n / 2);
    prog.copy(0, input(0, n), work(0, n));
    let lo = halving_reduce_scatter(&mut prog, 0, p, n);
    debug_assert_eq!(lo, r * (n / p));
    prog.finish(n, work(lo, n / p))
}

/// Partners at distance `1, 2, .., p/2`; at the step with distance `m` a
/// rank keeps the blocks congruent to itself modulo `2m` and ships the rest,
/// so the exchanged set is strided.
fn reduce_scatter_doubling(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let k = n / p;
    let mut prog = Prog::new(r, width, log2(p));
    prog.alloc(0, Buffer::Work, n);
    prog.alloc(0, Buffer::Scratch, n / 2);
    prog.copy(0, input(0, n), work(0, n));
    let mut mask = 1;
    let mut step = 0;
    while mask < p {
        let partner = r ^ mask;
        let period = 2 * mask;
        let count = p / period;
        let give = (r % period) ^ mask;
        let keep = r % period;
        let strided = |first_block: usize| Region::strided(Buffer::Work, first_block * k, k, period * k, count);
        prog.send(step, partner, strided(give));
        prog.recv(step, partner, scratch(count * k));
        prog.reduce(step, scratch(count * k), strided(keep));
        mask *= 2;
        step += 1;
    }
    prog.finish(n, work(r * k, k))
}

fn reduce_scatter_ring(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let k = n / p;
    let mut prog = Prog::new(r, width, p - 1);
    prog.alloc(0, Buffer::Work, n);
    prog.alloc(0, Buffer::Scratch, k);
    prog.copy(0, input(0, n), work(0, n));
    ring_reduce_scatter(&mut prog, 0, p, k);
    prog.finish(n, work(r * k, k))
}

fn allgather_ring(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let k = n / p;
    let mut prog = Prog::new(r, width, p - 1);
    prog.alloc(0, Buffer::Work, n);
    prog.copy(0, input(0, k), work(r * k, k));
    ring_allgather(&mut prog, 0, p, k);
    prog.finish(k, work(0, n))
}

fn allgather_doubling(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let k = n / p;
    let mut prog = Prog::new(r, width, log2(p));
    prog.alloc(0, Buffer::Work, n);
    prog.copy(0, input(0, k), work(r * k, k));
    doubling_allgather(&mut prog, 0, p, r * k, k);
    prog.finish(k, work(0, n))
}

fn alltoall_pairwise(r: usize, p: usize, n: usize, width: usize) -> RankProgram {
    let k = n / p;
    let mut prog = Prog::new(r, width, p - 1);
    prog.alloc(0, Buffer::Work, n);
    prog.copy(0, input(r * k, k), work(r * k, k));
    for i in 1..p {
        let (to, from) = if p.is_power_of_two() {
            (r ^ i, r ^ i)
        } else {
            ((r + i) % p, (r + p - i) % p)
        };
        prog.send(i - 1, to, input(to * k, k));
        prog.recv(i - 1, from, work(from * k, k));
    }
    prog.finish(n, work(0, n))
}
