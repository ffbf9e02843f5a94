//! Slow, obviously-correct reference implementations. Everything here works
//! on plain slices so it shares no code with the crates it checks.

pub mod pooling {
    /// `[start, end)` of input cells feeding output cell `i`: `start` is the
    /// largest `k` with `k*out <= i*in`, `end` the smallest `k` with
    /// `k*out >= (i+1)*in`.
    pub fn window(i: usize, input: usize, output: usize) -> (usize, usize) {
        let mut start = 0;
        while (start + 1) * output <= i * input {
            start += 1;
        }
        let mut end = 0;
        while end * output < (i + 1) * input {
            end += 1;
        }
        (start, end)
    }

    /// Factor pair of `cells` closest in aspect ratio to `gh x gw`, smaller
    /// row count first on ties.
    pub fn best_factor_pair(gh: usize, gw: usize, cells: usize) -> (usize, usize) {
        let mut pairs: Vec<(usize, usize)> = (1..=cells)
            .filter(|oh| cells % oh == 0)
            .map(|oh| (oh, cells / oh))
            .collect();
        // |oh/ow - gh/gw| as an exact fraction num/den
        let key = |&(oh, ow): &(usize, usize)| {
            let num = ((oh * gw) as i128 - (gh * ow) as i128).unsigned_abs();
            (num, (ow * gw) as u128)
        };
        pairs.sort_by(|a, b| {
            let (an, ad) = key(a);
            let (bn, bd) = key(b);
            (an * bd).cmp(&(bn * ad)).then(a.0.cmp(&b.0))
        });
        pairs[0]
    }

    /// Mean over the `t` tokens of each of `d` slices; `features` is `d*t*c`.
    pub fn slice_means(features: &[f32], d: usize, t: usize, c: usize) -> Vec<f32> {
        let mut out = Vec::new();
        for s in 0..d {
            for ch in 0..c {
                let mut sum = 0f64;
                for k in 0..t {
                    sum += features[(s * t + k) * c + ch] as f64;
                }
                out.push((sum / t as f64) as f32);
            }
        }
        out
    }

    /// Adaptive average pooling of a `gh x gw x c` grid to `oh x ow`, scanning
    /// every input cell for every output cell.
    pub fn adaptive_pool(tokens: &[f32], gh: usize, gw: usize, c: usize, oh: usize, ow: usize) -> Vec<f32> {
        let mut out = Vec::new();
        for oi in 0..oh {
            let (r0, r1) = window(oi, gh, oh);
            for oj in 0..ow {
                let (c0, c1) = window(oj, gw, ow);
                for ch in 0..c {
                    let (mut sum, mut n) = (0f64, 0usize);
                    for i in 0..gh {
                        for j in 0..gw {
                            if (r0..r1).contains(&i) && (c0..c1).contains(&j) {
                                sum += tokens[(i * gw + j) * c + ch] as f64;
                                n += 1;
                            }
                        }
                    }
                    out.push((sum / n as f64) as f32);
                }
            }
        }
        out
    }

    /// Index of the largest count, lowest index on ties; `len / 2` when all
    /// counts are zero.
    pub fn argmax_or_middle(counts: &[usize]) -> usize {
        let max = counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return counts.len() / 2;
        }
        counts.iter().position(|&n| n == max).unwrap()
    }

    /// Positive fraction of the pixels under pooled cell `(oi, oj)` of a
    /// slice whose `h x w` pixels were patched into a `gh x gw` grid and then
    /// pooled to `oh x ow`. A pixel counts when it lies in any patch of the
    /// pooled window.
    #[allow(clippy::too_many_arguments)]
    pub fn region_fraction(
        slice: &[bool],
        h: usize,
        w: usize,
        gh: usize,
        gw: usize,
        oh: usize,
        ow: usize,
        oi: usize,
        oj: usize,
    ) -> f64 {
        let (r0, r1) = window(oi, gh, oh);
        let (c0, c1) = window(oj, gw, ow);
        let in_rows = |y: usize| {
            (r0..r1).any(|i| {
                let (a, b) = window(i, h, gh);
                (a..b).contains(&y)
            })
        };
        let in_cols = |x: usize| {
            (c0..c1).any(|j| {
                let (a, b) = window(j, w, gw);
                (a..b).contains(&x)
            })
        };
        let (mut pos, mut area) = (0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                if in_rows(y) && in_cols(x) {
                    area += 1;
                    pos += usize::from(slice[y * w + x]);
                }
            }
        }
        pos as f64 / area as f64
    }
}

pub mod ccl {
    use std::collections::VecDeque;

    /// Breadth-first flood fill. Components are numbered by their first voxel
    /// in depth-slowest raster order.
    pub fn flood_fill(mask: &[bool], dims: [usize; 3], full_neighbourhood: bool) -> (Vec<u32>, usize) {
        let [nd, nh, nw] = dims;
        let mut labels = vec![0u32; mask.len()];
        let mut next = 0u32;
        for start in 0..mask.len() {
            if !mask[start] || labels[start] != 0 {
                continue;
            }
            next += 1;
            labels[start] = next;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let (z, y, x) = ((i / (nh * nw)) as i64, ((i / nw) % nh) as i64, (i % nw) as i64);
                for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let manhattan = dz.abs() + dy.abs() + dx.abs();
                            if manhattan == 0 || (!full_neighbourhood && manhattan > 1) {
                                continue;
                            }
                            let (zz, yy, xx) = (z + dz, y + dy, x + dx);
                            if zz < 0 || yy < 0 || xx < 0 || zz >= nd as i64 || yy >= nh as i64 || xx >= nw as i64 {
                                continue;
                            }
                            let j = (zz as usize * nh + yy as usize) * nw + xx as usize;
                            if mask[j] && labels[j] == 0 {
                                labels[j] = next;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
        (labels, next as usize)
    }

    /// Half-open voxel extent `max - min + 1` per axis of every component.
    pub fn extents(labels: &[u32], dims: [usize; 3], count: usize) -> Vec<[usize; 3]> {
        let [_, nh, nw] = dims;
        (1..=count as u32)
            .map(|l| {
                let coords: Vec<[usize; 3]> = labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == l)
                    .map(|(i, _)| [i / (nh * nw), (i / nw) % nh, i % nw])
                    .collect();
                [0, 1, 2].map(|a| {
                    let lo = coords.iter().map(|c| c[a]).min().unwrap();
                    let hi = coords.iter().map(|c| c[a]).max().unwrap();
                    hi - lo + 1
                })
            })
            .collect()
    }
}

pub mod text {
    /// Lowercase alphanumeric runs.
    pub fn words(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                cur.extend(ch.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
        if tokens.len() < n {
            return Vec::new();
        }
        (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
    }

    /// Clipped n-gram matches by repeated removal from the reference list.
    pub fn clipped_matches(cand: &[String], refr: &[String], n: usize) -> (usize, usize) {
        let c = grams(cand, n);
        let mut r = grams(refr, n);
        let mut matches = 0;
        for g in &c {
            if let Some(pos) = r.iter().position(|x| x == g) {
                r.swap_remove(pos);
                matches += 1;
            }
        }
        (matches, c.len())
    }

    /// Sentence BLEU-4 with zero matches replaced by `eps` and empty n-gram
    /// totals counted as 1.
    pub fn bleu4(candidate: &str, reference: &str, eps: f64) -> f64 {
        let (c, r) = (words(candidate), words(reference));
        if c.is_empty() {
            return 0.0;
        }
        let mut prod = 1.0f64;
        for n in 1..=4 {
            let (m, t) = clipped_matches(&c, &r, n);
            let p = if m == 0 { eps } else { m as f64 } / t.max(1) as f64;
            prod *= p;
        }
        let bp = if c.len() > r.len() {
            1.0
        } else {
            (1.0 - r.len() as f64 / c.len() as f64).exp()
        };
        bp * prod.powf(0.25)
    }

    /// LCS length by memoized recursion over suffixes.
    pub fn lcs(a: &[String], b: &[String]) -> usize {
        fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if i == a.len() || j == b.len() {
                return 0;
            }
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if a[i] == b[j] {
                1 + go(a, b, i + 1, j + 1, memo)
            } else {
                go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len()]; a.len()];
        go(a, b, 0, 0, &mut memo)
    }

    pub fn rouge_l(candidate: &str, reference: &str, beta: f64) -> f64 {
        let (c, r) = (words(candidate), words(reference));
        if c.is_empty() && r.is_empty() {
            return 1.0;
        }
        if c.is_empty() || r.is_empty() {
            return 0.0;
        }
        let l = lcs(&c, &r) as f64;
        if l == 0.0 {
            return 0.0;
        }
        let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
        (1.0 + beta * beta) * p * rec / (rec + beta * beta * p)
    }
}
