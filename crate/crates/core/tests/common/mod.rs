#![allow(dead_code)]

use typegate::corpus::ProgramSample;
use typegate::mutate::inject_misuse;
use typegate::typecheck::Category;

pub const LISTING_CORRECT: &str = "def take_last_assignment(source):
    first=True
    last=None
    for assn in source:
        if first:
            last=assn
            first=False
        if (assn[1]!=last[1]):
            (yield last)
        last=assn
    if (last is not None):
        (yield last)
";

pub fn listing_buggy() -> String {
    LISTING_CORRECT.replace("last[1]", "first[1]")
}

/// Well-typed functions without annotations; the checker must stay silent.
pub const CLEAN: &[&str] = &[
    "def mean_and_spread(values):
    total = 0.0
    count = 0
    for v in values:
        total += v
        count += 1
    if count == 0:
        return None
    mean = total / count
    spread = 0.0
    for v in values:
        spread += (v - mean) ** 2
    return mean, spread / count
",
    "def word_frequencies(text, stopwords):
    counts = {}
    for line in text.split('\\n'):
        for word in line.lower().split():
            word = word.strip('.,;:!?')
            if not word or word in stopwords:
                continue
            counts[word] = counts.get(word, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])
    return ranked
",
    "def merge_intervals(intervals):
    result = []
    for start, end in sorted(intervals):
        if result and start <= result[-1][1]:
            last_start, last_end = result[-1]
            result[-1] = (last_start, max(last_end, end))
        else:
            result.append((start, end))
    return result
",
    "def find_index(items, target):
    lo = 0
    hi = len(items) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        if items[mid] == target:
            return mid
        if items[mid] < target:
            lo = mid + 1
        else:
            hi = mid - 1
    return -1
",
    "def parse_config(lines):
    config = {}
    section = None
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if line.startswith('[') and line.endswith(']'):
            section = line[1:-1]
            config[section] = {}
        elif section is not None:
            key, _, value = line.partition('=')
            config[section][key.strip()] = value.strip()
    return config
",
    "def chunk(sequence, size):
    chunks = []
    current = []
    for item in sequence:
        current.append(item)
        if len(current) == size:
            chunks.append(current)
            current = []
    if current:
        chunks.append(current)
    return chunks
",
    "def format_table(rows, headers):
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(str(cell)))
    out = []
    line = ' | '.join([h.ljust(w) for h, w in zip(headers, widths)])
    out.append(line)
    out.append('-' * len(line))
    for row in rows:
        out.append(' | '.join([str(c).ljust(w) for c, w in zip(row, widths)]))
    return '\\n'.join(out)
",
    "def running_max(values):
    best = None
    out = []
    for v in values:
        if best is None or v > best:
            best = v
        out.append(best)
    return out
",
    "def count_vowels(word):
    vowels = 'aeiou'
    n = 0
    for ch in word.lower():
        if ch in vowels:
            n += 1
    return n
",
    "def normalize_path(path):
    parts = []
    for part in path.split('/'):
        if part == '' or part == '.':
            continue
        if part == '..':
            if parts:
                parts.pop()
        else:
            parts.append(part)
    return '/' + '/'.join(parts)
",
    "def histogram(values, bins, lo, hi):
    counts = [0] * bins
    width = (hi - lo) / bins
    for v in values:
        if v < lo or v >= hi:
            continue
        index = int((v - lo) / width)
        counts[index] += 1
    return counts
",
    "def dedupe(items):
    seen = set()
    result = []
    for item in items:
        key = item.lower() if isinstance(item, str) else item
        if key in seen:
            continue
        seen.add(key)
        result.append(item)
    return result
",
    "def retry_delays(attempts, base, cap):
    delays = []
    delay = base
    for attempt in range(attempts):
        delays.append(min(delay, cap))
        delay = delay * 2
    return delays
",
    "def read_pairs(path):
    pairs = []
    with open(path) as handle:
        for line in handle:
            if not line.strip():
                continue
            left, right = line.split('\\t', 1)
            pairs.append((left, right.rstrip('\\n')))
    return pairs
",
    "def transpose(matrix):
    if not matrix:
        return []
    rows = len(matrix)
    cols = len(matrix[0])
    result = []
    for c in range(cols):
        column = []
        for r in range(rows):
            column.append(matrix[r][c])
        result.append(column)
    return result
",
    "def safe_divide(numerator, denominator, default):
    try:
        result = numerator / denominator
    except ZeroDivisionError:
        result = default
    return result
",
];

/// Functions that use modules they never import.
pub const USES_MODULES: &[&str] = &[
    "def load_items(path):
    with open(path) as fh:
        data = json.load(fh)
    items = data.get('items', [])
    count = len(items)
    return items, count
",
    "def newest_file(folder):
    names = os.listdir(folder)
    best = None
    best_time = 0
    for name in names:
        full = os.path.join(folder, name)
        stamp = os.path.getmtime(full)
        if stamp > best_time:
            best = full
            best_time = stamp
    return best
",
];

/// Annotated functions; the checker must stay silent with annotations on.
pub const ANNOTATED: &[&str] = &[
    "def total_length(words: List[str]) -> int:
    total = 0
    for w in words:
        total += len(w)
    return total
",
    "def scale(values: List[float], factor: float) -> List[float]:
    out = []
    for v in values:
        out.append(v * factor)
    return out
",
    "def initials(name: str, sep: str) -> str:
    parts = name.split()
    letters = [p[0].upper() for p in parts]
    return sep.join(letters)
",
    "def clamp(value: int, low: int, high: int) -> int:
    if value < low:
        return low
    if value > high:
        return high
    return value
",
    "def lookup(table: Dict[str, int], key: str, default: int) -> int:
    if key in table:
        return table[key]
    return default
",
    "def repeat_word(word: str, times: int) -> str:
    result = ''
    count = 0
    while count < times:
        result = result + word
        count += 1
    return result
",
    "def average(values: List[float]) -> float:
    count = len(values)
    if count == 0:
        return 0.0
    return sum(values) / count
",
    "def pad(text: str, width: int, fill: str) -> str:
    missing = width - len(text)
    if missing <= 0:
        return text
    return text + fill * missing
",
];

pub struct TaxonomyCase {
    pub name: &'static str,
    pub source: String,
    pub stubs: Option<&'static str>,
    pub annotations: bool,
    pub expected: Vec<(Category, u32)>,
}

pub fn taxonomy() -> Vec<TaxonomyCase> {
    let case = |name, source: &str, annotations, expected| TaxonomyCase {
        name,
        source: source.to_string(),
        stubs: None,
        annotations,
        expected,
    };
    vec![
        case(
            "name-error",
            "def f(items):\n    total = 0\n    for x in items:\n        total += x\n    return totl\n",
            false,
            vec![(Category::NameError, 5)],
        ),
        case(
            "attribute-error",
            "def f(n):\n    count = 0\n    count.append(n)\n    return count\n",
            false,
            vec![(Category::AttributeError, 3)],
        ),
        TaxonomyCase { source: listing_buggy(), ..case("unsupported-operand", "", false, vec![(Category::UnsupportedOperand, 8)]) },
        case(
            "wrong-arg-types",
            "def f(items):\n    size = 10\n    return len(size)\n",
            false,
            vec![(Category::WrongArgTypes, 3)],
        ),
        case(
            "not-writable",
            "def f(a, b):\n    pair = (a, b)\n    pair[0] = b\n    return pair\n",
            false,
            vec![(Category::NotWritable, 3)],
        ),
        case("bad-return-type", "def f(name: str) -> int:\n    return name\n", true, vec![(Category::BadReturnType, 2)]),
        case(
            "import-error",
            "from os.path import *\n\ndef f(p):\n    return join(p, 'x')\n",
            false,
            vec![(Category::ImportError, 1)],
        ),
        TaxonomyCase {
            stubs: Some("def helper(x: int) -> int: ...\n"),
            ..case(
                "internal-error",
                "def helper(x: int) -> int: ...\n\ndef f():\n    return helper(1)\n",
                false,
                vec![(Category::InternalError, 3)],
            )
        },
    ]
}

pub fn sample(id: impl Into<String>, source: &str) -> ProgramSample {
    ProgramSample::correct(id, "fixture", "pool.py", source)
}

/// `n` buggy samples injected into `pool` functions round-robin.
pub fn injected(pool: &[&str], n: usize, seed: u64, prefix: &str) -> Vec<ProgramSample> {
    (0..n)
        .map(|i| {
            let s = sample(format!("{prefix}{i}"), pool[i % pool.len()]);
            inject_misuse(&s, seed).expect("pool functions have injection sites").0
        })
        .collect()
}
