#pragma once
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mthal/data.hpp"

namespace mthal {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position by name; throws DataError when absent.
    std::size_t column(const std::string& name) const;
};

/// RFC 4180: quoted fields may hold separators, doubled quotes and line
/// breaks; CRLF and LF line endings are both accepted.
CsvTable read_csv(std::istream& is);
CsvTable read_csv_file(const std::filesystem::path& path);
void write_csv(std::ostream& os, const CsvTable& table);
std::string csv_quote(const std::string& field);

/// Strict numeric parse: the whole cell (surrounding blanks aside) must be a
/// finite double.
std::optional<double> parse_number(const std::string& cell);

struct CsvSchema {
    std::string task_column = "task";
    std::string outcome_column = "y";
    std::string weight_column;                 // empty: unit weights
    std::string cluster_column;                // empty: no clusters
    std::vector<std::string> categorical;      // one-hot encoded as name=level
    std::vector<std::string> ignore;
    bool require_outcome = true;               // false: outcomes set to 0 when the column is absent
};

/// Rows are partitioned by the task column, tasks ordered by first appearance.
/// Every column not named in the schema is a numeric covariate.
std::vector<TaskDataset> tasks_from_csv(const CsvTable& table, const CsvSchema& schema);
std::vector<TaskDataset> load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Inverse of tasks_from_csv for numeric covariates, full double precision.
CsvTable tasks_to_csv(const std::vector<TaskDataset>& tasks, const CsvSchema& schema = {});

inline constexpr std::size_t kParkinsonsRows = 5875;
const std::vector<std::string>& parkinsons_voice_measures();

/// Two tasks (1: motor_UPDRS, 2: total_UPDRS) over the same recordings:
/// covariates age, sex and the 16 voice measures, plus the subject number
/// as a covariate when `subject_covariate` is set. Subject numbers are the
/// cluster ids. A row count other than 5,875 is reported through `warn`.
std::vector<TaskDataset> load_parkinsons(const std::filesystem::path& path, bool subject_covariate = true,
                                         const std::function<void(const std::string&)>& warn = {});
std::vector<TaskDataset> parkinsons_from_csv(const CsvTable& table, bool subject_covariate = true,
                                             const std::function<void(const std::string&)>& warn = {});

/// Writes through a temporary file in the target directory and renames it
/// into place, so the target is either complete or untouched.
void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);

} // namespace mthal
