#include "mthal/basis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "mthal/error.hpp"
#include "mthal/parallel.hpp"

namespace mthal {

bool Section::contains(int j) const {
    return std::binary_search(covariates.begin(), covariates.end(), j);
}

std::vector<Section> enumerate_sections(int d, int max_degree) {
    if (max_degree < 1) throw UsageError("enumerate_sections: max_degree must be >= 1");
    if (d < 1) throw UsageError("enumerate_sections: need at least one covariate");
    max_degree = std::min(max_degree, d);
    std::vector<Section> out;
    for (int size = 1; size <= max_degree; ++size) {
        std::vector<int> idx(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (;;) {
            out.push_back(Section{idx});
            int pos = size - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == d - size + pos) --pos;
            if (pos < 0) break;
            ++idx[static_cast<std::size_t>(pos)];
            for (int i = pos + 1; i < size; ++i)
                idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
        }
    }
    return out;
}

int evaluate_basis(const BasisFunction& b, std::span<const double> w) {
    for (std::size_t m = 0; m < b.knot.size(); ++m) {
        if (!(w[static_cast<std::size_t>(b.section.covariates[m])] >= b.knot[m])) return 0;
    }
    return 1;
}

KnotSet select_knots(const StackedDataset& train, int per_covariate_max) {
    if (per_covariate_max < 0) throw UsageError("select_knots: per_covariate_max must be >= 0");
    KnotSet ks;
    ks.per_covariate.resize(train.cols());
    for (std::size_t j = 0; j < train.cols(); ++j) {
        std::vector<double> vals;
        vals.reserve(train.rows());
        for (std::size_t i = 0; i < train.rows(); ++i) {
            const double v = train.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (!std::isnan(v)) vals.push_back(v);
        }
        std::sort(vals.begin(), vals.end());
        std::vector<double> distinct = vals;
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        const auto m = static_cast<std::size_t>(per_covariate_max);
        if (per_covariate_max == 0 || distinct.size() <= m) {
            ks.per_covariate[j] = std::move(distinct);
            continue;
        }
        // Type-1 empirical quantiles at levels q/(m+1); always observed values.
        const auto n = vals.size();
        std::vector<double> knots;
        for (std::size_t q = 1; q <= m; ++q) {
            std::size_t pos = (q * n + m) / (m + 1);
            pos = std::clamp<std::size_t>(pos, 1, n) - 1;
            knots.push_back(vals[pos]);
        }
        knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
        ks.per_covariate[j] = std::move(knots);
    }
    return ks;
}

std::size_t GroupedDesign::group_of_column(std::size_t c) const {
    const auto& gs = matrix.group_start;
    return static_cast<std::size_t>(std::upper_bound(gs.begin(), gs.end(), c) - gs.begin()) - 1;
}

namespace {

std::uint64_t hash_rows(std::span<const std::uint32_t> rows) {
    std::uint64_t h = 1469598103934665603ull ^ rows.size();
    for (auto r : rows) {
        h ^= r;
        h *= 1099511628211ull;
    }
    return h;
}

double snap(const std::vector<double>& knots, double v) {
    if (std::isnan(v) || knots.empty()) return v;
    auto it = std::upper_bound(knots.begin(), knots.end(), v);
    if (it == knots.begin()) return knots.front();
    return *(it - 1);
}

struct Candidate {
    BasisFunction basis;
    std::vector<std::uint32_t> rows;  // training rows where the basis is 1
};

struct SectionCandidates {
    std::vector<int> tasks;          // supporting task indices
    std::vector<Candidate> bases;
};

SectionCandidates section_candidates(const StackedDataset& train, const Section& s, const KnotSet& knots,
                                     const std::vector<int>& task_of_row, bool deduplicate) {
    SectionCandidates out;
    for (std::size_t k = 0; k < train.num_tasks(); ++k) {
        bool ok = true;
        for (int j : s.covariates) ok = ok && train.has_covariate[k][static_cast<std::size_t>(j)];
        if (ok) out.tasks.push_back(static_cast<int>(k));
    }
    if (out.tasks.empty()) return out;
    std::vector<bool> task_ok(train.num_tasks(), false);
    for (int k : out.tasks) task_ok[static_cast<std::size_t>(k)] = true;

    const auto deg = s.degree();
    std::vector<std::uint32_t> eligible;
    std::vector<double> raw;      // eligible rows x deg
    for (std::size_t i = 0; i < train.rows(); ++i) {
        if (!task_ok[static_cast<std::size_t>(task_of_row[i])]) continue;
        eligible.push_back(static_cast<std::uint32_t>(i));
        for (int j : s.covariates) raw.push_back(train.covariates(static_cast<Eigen::Index>(i), j));
    }

    std::map<std::vector<double>, bool> seen;
    std::vector<double> knot(deg);
    for (std::size_t e = 0; e < eligible.size(); ++e) {
        for (std::size_t m = 0; m < deg; ++m)
            knot[m] = snap(knots.per_covariate[static_cast<std::size_t>(s.covariates[m])], raw[e * deg + m]);
        if (deduplicate && !seen.emplace(knot, true).second) continue;
        Candidate c;
        c.basis.section = s;
        c.basis.knot = knot;
        c.basis.source_row = train.row_ids[eligible[e]];
        for (std::size_t r = 0; r < eligible.size(); ++r) {
            const double* w = raw.data() + r * deg;
            bool on = true;
            for (std::size_t m = 0; m < deg && on; ++m) on = w[m] >= knot[m];
            if (on) c.rows.push_back(eligible[r]);
        }
        out.bases.push_back(std::move(c));
    }
    return out;
}

} // namespace

GroupedDesign build_design(const StackedDataset& train, const std::vector<Section>& sections,
                           const KnotSet& knots, const BasisConfig& config) {
    if (knots.per_covariate.size() != train.cols())
        throw UsageError("build_design: knot set does not match covariate count");
    if (train.rows() == 0) throw DataError("build_design: no training rows");

    GroupedDesign design;
    design.task_ids = train.task_ids;
    design.covariate_names = train.covariate_names;
    design.has_covariate = train.has_covariate;
    design.task_interaction = config.task_interaction;
    design.matrix.columns.n_rows = train.rows();

    const auto task_of_row = train.task_index_of_rows();
    const auto n = train.rows();

    // Exact-duplicate detection on whole bases and on single columns.
    std::unordered_multimap<std::uint64_t, std::size_t> basis_index;   // hash -> group
    std::vector<std::vector<std::uint32_t>> group_rows;                // full row set per group
    std::vector<std::vector<int>> group_tasks;
    std::unordered_multimap<std::uint64_t, std::size_t> column_index;  // hash -> column

    auto& cols = design.matrix.columns;
    auto column_seen = [&](std::span<const std::uint32_t> rows, std::uint64_t h) {
        auto [lo, hi] = column_index.equal_range(h);
        for (auto it = lo; it != hi; ++it) {
            auto other = cols.rows_of(it->second);
            if (std::equal(other.begin(), other.end(), rows.begin(), rows.end())) return true;
        }
        return false;
    };

    const unsigned threads = config.threads;
    const std::size_t batch = 16;
    for (std::size_t first = 0; first < sections.size(); first += batch) {
        const auto last = std::min(sections.size(), first + batch);
        std::vector<SectionCandidates> found(last - first);
        parallel_for(last - first, threads, [&](std::size_t i) {
            found[i] = section_candidates(train, sections[first + i], knots, task_of_row, config.deduplicate);
        });

        for (auto& sc : found) {
            for (auto& cand : sc.bases) {
                const auto h = hash_rows(cand.rows);
                if (config.deduplicate) {
                    bool alias = false;
                    auto [lo, hi] = basis_index.equal_range(h);
                    for (auto it = lo; it != hi && !alias; ++it) {
                        if (group_rows[it->second] == cand.rows && group_tasks[it->second] == sc.tasks) {
                            design.aliases[it->second].push_back(cand.basis);
                            alias = true;
                        }
                    }
                    if (alias) continue;
                }

                std::vector<int> col_tasks;
                auto emit = [&](std::span<const std::uint32_t> rows, int task) {
                    if (config.prune && (rows.empty() || rows.size() == n)) return;
                    const auto ch = hash_rows(rows);
                    if (config.deduplicate && column_seen(rows, ch)) return;
                    column_index.emplace(ch, cols.cols());
                    cols.push_binary(rows);
                    col_tasks.push_back(task);
                };
                if (config.task_interaction) {
                    for (int k : sc.tasks) {
                        const auto lo = static_cast<std::uint32_t>(train.row_offsets[static_cast<std::size_t>(k)]);
                        const auto hi = static_cast<std::uint32_t>(train.row_offsets[static_cast<std::size_t>(k) + 1]);
                        auto b = std::lower_bound(cand.rows.begin(), cand.rows.end(), lo);
                        auto e = std::lower_bound(b, cand.rows.end(), hi);
                        emit(std::span<const std::uint32_t>(cand.rows.data() + (b - cand.rows.begin()),
                                                            static_cast<std::size_t>(e - b)),
                             k);
                    }
                } else {
                    emit(cand.rows, -1);
                }
                if (col_tasks.empty()) continue;

                if (cols.cols() > config.column_budget) {
                    throw DataError("build_design: design exceeds the column budget of " +
                                    std::to_string(config.column_budget) +
                                    " columns; reduce max_degree or per_covariate_max");
                }
                design.matrix.group_start.push_back(cols.cols());
                design.column_task.insert(design.column_task.end(), col_tasks.begin(), col_tasks.end());
                if (config.deduplicate) {
                    basis_index.emplace(h, design.catalog.size());
                    group_rows.push_back(std::move(cand.rows));
                    group_tasks.push_back(sc.tasks);
                }
                design.catalog.push_back(std::move(cand.basis));
                design.aliases.emplace_back();
            }
        }
    }
    return design;
}

GroupedDesign build_design(const StackedDataset& train, const BasisConfig& config) {
    const int d = static_cast<int>(train.cols());
    const auto sections = enumerate_sections(d, std::min(config.max_degree, d));
    const auto knots = select_knots(train, config.per_covariate_max);
    return build_design(train, sections, knots, config);
}

SparseColumns evaluate_design(const GroupedDesign& design, const StackedDataset& rows,
                              std::span<const std::size_t> columns) {
    // Covariate positions in `rows` for each design covariate.
    std::vector<int> pos(design.covariate_names.size(), -1);
    for (std::size_t j = 0; j < design.covariate_names.size(); ++j) {
        auto it = std::find(rows.covariate_names.begin(), rows.covariate_names.end(), design.covariate_names[j]);
        if (it != rows.covariate_names.end()) pos[j] = static_cast<int>(it - rows.covariate_names.begin());
    }
    // Design task index of each row.
    std::vector<std::vector<std::uint32_t>> rows_of_task(design.task_ids.size());
    for (std::size_t k = 0; k < rows.num_tasks(); ++k) {
        if (rows.row_offsets[k + 1] == rows.row_offsets[k]) continue;
        auto it = std::find(design.task_ids.begin(), design.task_ids.end(), rows.task_ids[k]);
        if (it == design.task_ids.end())
            throw DataError("evaluate_design: task " + std::to_string(rows.task_ids[k]) +
                            " was not seen in training");
        auto& list = rows_of_task[static_cast<std::size_t>(it - design.task_ids.begin())];
        for (auto i = rows.row_offsets[k]; i < rows.row_offsets[k + 1]; ++i) list.push_back(static_cast<std::uint32_t>(i));
    }

    std::vector<std::size_t> all;
    if (columns.empty()) {
        all.resize(design.num_columns());
        for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
        columns = all;
    }

    SparseColumns out;
    out.n_rows = rows.rows();
    std::vector<std::uint32_t> on;
    for (const auto c : columns) {
        const auto& b = design.catalog[design.group_of_column(c)];
        std::vector<Eigen::Index> cov;
        for (int j : b.section.covariates) {
            if (pos[static_cast<std::size_t>(j)] < 0)
                throw DataError("evaluate_design: covariate '" + design.covariate_names[static_cast<std::size_t>(j)] +
                                "' missing from new rows");
            cov.push_back(pos[static_cast<std::size_t>(j)]);
        }
        on.clear();
        auto scan = [&](const std::vector<std::uint32_t>& list) {
            for (auto i : list) {
                bool hit = true;
                for (std::size_t m = 0; m < cov.size() && hit; ++m)
                    hit = rows.covariates(static_cast<Eigen::Index>(i), cov[m]) >= b.knot[m];
                if (hit) on.push_back(i);
            }
        };
        const int task = design.column_task[c];
        if (task >= 0) {
            scan(rows_of_task[static_cast<std::size_t>(task)]);
        } else {
            for (std::size_t k = 0; k < rows_of_task.size(); ++k) {
                bool supports = true;
                for (int j : b.section.covariates) supports = supports && design.has_covariate[k][static_cast<std::size_t>(j)];
                if (supports) scan(rows_of_task[k]);
            }
            std::sort(on.begin(), on.end());
        }
        out.push_binary(on);
    }
    return out;
}

void write_catalog(std::ostream& os, const GroupedDesign& design) {
    os << "# mthal-basis-catalog v1\n";
    os << "group\tsection\tknot\tsource_row\ttasks\n";
    const auto old = os.precision(17);
    for (std::size_t g = 0; g < design.catalog.size(); ++g) {
        const auto& b = design.catalog[g];
        os << g << '\t';
        for (std::size_t m = 0; m < b.section.covariates.size(); ++m) os << (m ? "," : "") << b.section.covariates[m];
        os << '\t';
        for (std::size_t m = 0; m < b.knot.size(); ++m) os << (m ? "," : "") << b.knot[m];
        os << '\t' << b.source_row << '\t';
        bool first = true;
        for (auto c = design.matrix.group_start[g]; c < design.matrix.group_start[g + 1]; ++c) {
            const int t = design.column_task[c];
            os << (first ? "" : ",") << (t < 0 ? std::string("*") : std::to_string(design.task_ids[static_cast<std::size_t>(t)]));
            first = false;
        }
        os << '\n';
    }
    os.precision(old);
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

} // namespace

std::vector<CatalogEntry> read_catalog(std::istream& is) {
    std::vector<CatalogEntry> out;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto f = split_on(line, '\t');
        if (f.size() != 5) throw DataError("read_catalog: malformed line: " + line);
        CatalogEntry e;
        e.group = std::stoull(f[0]);
        for (const auto& s : split_on(f[1], ',')) e.basis.section.covariates.push_back(std::stoi(s));
        for (const auto& s : split_on(f[2], ',')) e.basis.knot.push_back(std::stod(s));
        e.basis.source_row = std::stoull(f[3]);
        for (const auto& s : split_on(f[4], ',')) e.task_ids.push_back(s == "*" ? -1 : std::stoi(s));
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace mthal
