#include "mthal/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

#include "mthal/error.hpp"

namespace mthal {

std::size_t CsvTable::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column \"" + name + "\"");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& is) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false, any = false;
    std::size_t line = 1;
    char c;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // A blank line is not a record.
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };

    while (is.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (is.peek() == '"') {
                    is.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field_started && !field.empty())
                throw DataError("line " + std::to_string(line) + ": stray quote inside an unquoted field");
            quoted = true;
            field_started = true;
            break;
        case ',': end_field(); break;
        case '\r':
            if (is.peek() == '\n') break;
            [[fallthrough]];
        case '\n':
            end_record();
            ++line;
            break;
        default:
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw DataError("unterminated quoted field at end of input");
    if (any && (field_started || !record.empty())) end_record();
    if (records.empty()) throw DataError("empty CSV input (no header)");

    CsvTable t;
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size())
            throw DataError("row " + std::to_string(r) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(records[r].size()));
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_csv(in);
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

void write_csv(std::ostream& os, const CsvTable& table) {
    auto line = [&](const std::vector<std::string>& rec) {
        for (std::size_t j = 0; j < rec.size(); ++j) os << (j ? "," : "") << csv_quote(rec[j]);
        os << '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
}

std::optional<double> parse_number(const std::string& cell) {
    auto b = cell.find_first_not_of(" \t");
    if (b == std::string::npos) return std::nullopt;
    auto e = cell.find_last_not_of(" \t") + 1;
    const char* first = cell.data() + b;
    const char* last = cell.data() + e;
    if (*first == '+') ++first;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

namespace {

std::string cell_error(std::size_t row, const std::string& column, const std::string& cell, const char* what) {
    return "row " + std::to_string(row + 1) + ", column \"" + column + "\": cannot parse '" + cell + "' as " + what;
}

double number_at(const CsvTable& t, std::size_t row, std::size_t col) {
    auto v = parse_number(t.rows[row][col]);
    if (!v) throw DataError(cell_error(row, t.header[col], t.rows[row][col], "a number"));
    return *v;
}

std::int64_t integer_at(const CsvTable& t, std::size_t row, std::size_t col) {
    auto v = parse_number(t.rows[row][col]);
    if (!v || *v != std::floor(*v) || std::abs(*v) > 9.0e15)
        throw DataError(cell_error(row, t.header[col], t.rows[row][col], "an integer"));
    return static_cast<std::int64_t>(*v);
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

bool listed(const std::vector<std::string>& list, const std::string& name) {
    return std::find(list.begin(), list.end(), name) != list.end();
}

} // namespace

std::vector<TaskDataset> tasks_from_csv(const CsvTable& table, const CsvSchema& schema) {
    if (table.rows.empty()) throw DataError("CSV has a header but no data rows");
    const auto task_col = table.column(schema.task_column);
    std::optional<std::size_t> y_col, w_col, c_col;
    if (schema.require_outcome || listed(table.header, schema.outcome_column)) y_col = table.column(schema.outcome_column);
    if (!schema.weight_column.empty()) w_col = table.column(schema.weight_column);
    if (!schema.cluster_column.empty()) c_col = table.column(schema.cluster_column);
    for (const auto& name : schema.categorical) table.column(name);
    for (const auto& name : schema.ignore) table.column(name);

    // Covariate layout: numeric columns in header order; a categorical column
    // expands in place to one indicator per sorted distinct level.
    struct Source {
        std::size_t col;
        std::optional<std::string> level;
    };
    std::vector<Source> sources;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        const auto& h = table.header[j];
        if (j == task_col || (y_col && j == *y_col) || (w_col && j == *w_col) || (c_col && j == *c_col) ||
            listed(schema.ignore, h))
            continue;
        if (listed(schema.categorical, h)) {
            std::set<std::string> levels;
            for (const auto& r : table.rows) levels.insert(r[j]);
            for (const auto& lv : levels) {
                sources.push_back({j, lv});
                names.push_back(h + "=" + lv);
            }
        } else {
            sources.push_back({j, std::nullopt});
            names.push_back(h);
        }
    }

    std::vector<int> order;
    std::map<int, std::vector<std::size_t>> rows_of;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto id = integer_at(table, r, task_col);
        if (id < INT32_MIN || id > INT32_MAX) throw DataError(cell_error(r, table.header[task_col], table.rows[r][task_col], "a task id"));
        const int k = static_cast<int>(id);
        if (!rows_of.count(k)) order.push_back(k);
        rows_of[k].push_back(r);
    }

    std::vector<TaskDataset> tasks;
    for (int k : order) {
        const auto& rows = rows_of[k];
        const auto n = static_cast<Eigen::Index>(rows.size());
        TaskDataset t;
        t.task_id = k;
        t.covariate_names = names;
        t.covariates.resize(n, static_cast<Eigen::Index>(sources.size()));
        t.outcomes = Vector::Zero(n);
        if (w_col) t.weights = Vector(n);
        if (c_col) t.cluster_ids = std::vector<std::int64_t>(rows.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto r = rows[static_cast<std::size_t>(i)];
            for (std::size_t m = 0; m < sources.size(); ++m) {
                const auto& s = sources[m];
                t.covariates(i, static_cast<Eigen::Index>(m)) =
                    s.level ? (table.rows[r][s.col] == *s.level ? 1.0 : 0.0) : number_at(table, r, s.col);
            }
            if (y_col) t.outcomes[i] = number_at(table, r, *y_col);
            if (w_col) (*t.weights)[i] = number_at(table, r, *w_col);
            if (c_col) (*t.cluster_ids)[static_cast<std::size_t>(i)] = integer_at(table, r, *c_col);
        }
        t.validate();
        tasks.push_back(std::move(t));
    }
    return tasks;
}

std::vector<TaskDataset> load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    return tasks_from_csv(read_csv_file(path), schema);
}

CsvTable tasks_to_csv(const std::vector<TaskDataset>& tasks, const CsvSchema& schema) {
    if (tasks.empty()) throw UsageError("no tasks to write");
    const auto& names = tasks.front().covariate_names;
    for (const auto& t : tasks)
        if (t.covariate_names != names) throw UsageError("tasks_to_csv: tasks must share covariate names");
    const bool weights = std::any_of(tasks.begin(), tasks.end(), [](const TaskDataset& t) { return t.weights.has_value(); });
    const bool clusters =
        std::any_of(tasks.begin(), tasks.end(), [](const TaskDataset& t) { return t.cluster_ids.has_value(); });
    const std::string wname = schema.weight_column.empty() ? "weight" : schema.weight_column;
    const std::string cname = schema.cluster_column.empty() ? "cluster" : schema.cluster_column;

    CsvTable out;
    out.header.push_back(schema.task_column);
    out.header.insert(out.header.end(), names.begin(), names.end());
    out.header.push_back(schema.outcome_column);
    if (weights) out.header.push_back(wname);
    if (clusters) out.header.push_back(cname);
    for (const auto& t : tasks) {
        for (Eigen::Index i = 0; i < t.outcomes.size(); ++i) {
            std::vector<std::string> rec{std::to_string(t.task_id)};
            for (Eigen::Index j = 0; j < t.covariates.cols(); ++j) rec.push_back(format_double(t.covariates(i, j)));
            rec.push_back(format_double(t.outcomes[i]));
            if (weights) rec.push_back(format_double(t.weights ? (*t.weights)[i] : 1.0));
            if (clusters) rec.push_back(t.cluster_ids ? std::to_string((*t.cluster_ids)[static_cast<std::size_t>(i)]) : "0");
            out.rows.push_back(std::move(rec));
        }
    }
    return out;
}

const std::vector<std::string>& parkinsons_voice_measures() {
    static const std::vector<std::string> names{
        "Jitter(%)",    "Jitter(Abs)",  "Jitter:RAP",   "Jitter:PPQ5",   "Jitter:DDP", "Shimmer",
        "Shimmer(dB)",  "Shimmer:APQ3", "Shimmer:APQ5", "Shimmer:APQ11", "Shimmer:DDA", "NHR",
        "HNR",          "RPDE",         "DFA",          "PPE"};
    return names;
}

std::vector<TaskDataset> parkinsons_from_csv(const CsvTable& table, bool subject_covariate,
                                             const std::function<void(const std::string&)>& warn) {
    constexpr std::size_t kColumns = 22;
    if (table.header.size() != kColumns)
        throw DataError("Parkinson's file: expected " + std::to_string(kColumns) + " columns, found " +
                        std::to_string(table.header.size()));
    if (table.rows.empty()) throw DataError("Parkinson's file has no data rows");
    if (table.rows.size() != kParkinsonsRows && warn)
        warn("Parkinson's file has " + std::to_string(table.rows.size()) + " rows, expected " +
             std::to_string(kParkinsonsRows));

    const auto subject = table.column("subject#");
    std::vector<std::string> cov{"age", "sex"};
    const auto& voice = parkinsons_voice_measures();
    cov.insert(cov.end(), voice.begin(), voice.end());
    std::vector<std::size_t> cols;
    for (const auto& c : cov) cols.push_back(table.column(c));
    if (subject_covariate) {
        cov.push_back("subject");
        cols.push_back(subject);
    }
    const std::size_t outcome[2] = {table.column("motor_UPDRS"), table.column("total_UPDRS")};

    const auto n = static_cast<Eigen::Index>(table.rows.size());
    Matrix x(n, static_cast<Eigen::Index>(cols.size()));
    std::vector<std::int64_t> ids(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t j = 0; j < cols.size(); ++j)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = number_at(table, r, cols[j]);
        ids[r] = integer_at(table, r, subject);
    }
    std::vector<TaskDataset> tasks;
    for (int k = 0; k < 2; ++k) {
        TaskDataset t;
        t.task_id = k + 1;
        t.covariates = x;
        t.covariate_names = cov;
        t.cluster_ids = ids;
        t.outcomes.resize(n);
        for (std::size_t r = 0; r < table.rows.size(); ++r)
            t.outcomes[static_cast<Eigen::Index>(r)] = number_at(table, r, outcome[k]);
        t.validate();
        tasks.push_back(std::move(t));
    }
    return tasks;
}

std::vector<TaskDataset> load_parkinsons(const std::filesystem::path& path, bool subject_covariate,
                                         const std::function<void(const std::string&)>& warn) {
    return parkinsons_from_csv(read_csv_file(path), subject_covariate, warn);
}

void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    namespace fs = std::filesystem;
    const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    std::random_device rd;
    const fs::path tmp =
        dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()) + "_" + std::to_string(rd()));
    try {
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw DataError("cannot write " + tmp.string());
            body(out);
            out.flush();
            if (!out) throw DataError("write failed for " + path.string());
        }
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

} // namespace mthal
