/**
 * Small deterministic PRNG (splitmix64-seeded xoshiro-style mix) so that
 * augmentation choices and parameters are reproducible across runs and
 * platforms for a given job seed.
 */
export class SeededRng {
  private state: bigint;

  constructor(seed: number) {
    this.state = BigInt.asUintN(64, BigInt(Math.trunc(seed)) + 0x9e3779b97f4a7c15n);
  }

  /** Next uint64 via splitmix64. */
  private nextU64(): bigint {
    this.state = BigInt.asUintN(64, this.state + 0x9e3779b97f4a7c15n);
    let z = this.state;
    z = BigInt.asUintN(64, (z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n);
    z = BigInt.asUintN(64, (z ^ (z >> 27n)) * 0x94d049bb133111ebn);
    return z ^ (z >> 31n);
  }

  /** Uniform float in [0, 1). */
  next(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }

  /** Uniform integer in [0, n). */
  int(n: number): number {
    if (n <= 0) throw new RangeError("int() needs n > 0");
    return Math.floor(this.next() * n);
  }

  /** Uniform float in [lo, hi). */
  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }

  /** Independent child stream, offset by a stable tag. */
  child(tag: number): SeededRng {
    const rng = new SeededRng(0);
    rng.seed(this.nextU64() ^ BigInt.asUintN(64, BigInt(Math.trunc(tag))));
    return rng;
  }

  private seed(s: bigint): void {
    this.state = BigInt.asUintN(64, s + 0x9e3779b97f4a7c15n);
  }
}
