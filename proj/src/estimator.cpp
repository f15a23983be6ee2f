#include "mthal/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "mthal/error.hpp"

namespace mthal {

using nlohmann::json;

SolverConfig pipeline_solver_defaults() {
    SolverConfig s;
    s.tol = 1e-4;
    return s;
}

EstimatorConfig default_estimator_config() {
    EstimatorConfig c;
    c.solver = pipeline_solver_defaults();
    return c;
}

namespace {

Standardizer fit_scaling(Scaling scaling, const StackedDataset& train) {
    switch (scaling) {
    case Scaling::kNone: return {};
    case Scaling::kPooled: return standardize_fit(train, StandardizeScope::kPooled);
    case Scaling::kPerTask: break;
    }
    return standardize_fit(train, StandardizeScope::kPerTask);
}

void check_config(const EstimatorConfig& c) {
    if (c.grid_size < 1) throw UsageError("grid size must be at least 1");
    if (!(c.grid_ratio > 0.0 && c.grid_ratio < 1.0)) throw UsageError("grid ratio must lie in (0, 1)");
    if (c.folds < 2) throw UsageError("need at least 2 folds");
    if (!(c.solver.tol > 0.0)) throw UsageError("solver tolerance must be positive");
}

/// Columns with a nonzero coefficient anywhere on the path.
std::vector<std::size_t> path_support(const PathResult& path) {
    if (path.states.empty()) return {};
    const auto p = static_cast<std::size_t>(path.states.front().beta.size());
    std::vector<bool> used(p, false);
    for (const auto& s : path.states)
        for (std::size_t c = 0; c < p; ++c)
            if (s.beta[static_cast<Eigen::Index>(c)] != 0.0) used[c] = true;
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < p; ++c)
        if (used[c]) cols.push_back(c);
    return cols;
}

Matrix hal_path_predictions(const GroupedDesign& design, const PathResult& path, const StackedDataset& rows) {
    const auto cols = path_support(path);
    Matrix pred(static_cast<Eigen::Index>(rows.rows()), static_cast<Eigen::Index>(path.states.size()));
    if (cols.empty()) {
        // An empty column list means "every column" to evaluate_design.
        for (std::size_t b = 0; b < path.states.size(); ++b)
            pred.col(static_cast<Eigen::Index>(b)).setConstant(path.states[b].intercept());
        return pred;
    }
    const auto x = evaluate_design(design, rows, cols);
    for (std::size_t b = 0; b < path.states.size(); ++b) {
        const auto& s = path.states[b];
        Vector coef(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t m = 0; m < cols.size(); ++m) coef[static_cast<Eigen::Index>(m)] = s.beta[static_cast<Eigen::Index>(cols[m])];
        Vector out;
        x.multiply(coef, out);
        pred.col(static_cast<Eigen::Index>(b)) = out.array() + s.intercept();
    }
    return pred;
}

/// Grid points strictly above `lambda`, then `lambda` itself.
std::vector<double> grid_down_to(const std::vector<double>& grid, double lambda) {
    std::vector<double> out;
    for (double l : grid)
        if (l > lambda) out.push_back(l);
    out.push_back(lambda);
    return out;
}

void fill_hal_model(MtHalModel& model, const GroupedDesign& design, const CoefficientState& state, double lambda) {
    model.task_ids = design.task_ids;
    model.covariate_names = design.covariate_names;
    model.has_covariate = design.has_covariate;
    model.task_interaction = design.task_interaction;
    model.design_groups = design.num_groups();
    model.design_columns = design.num_columns();
    model.lambda = lambda;
    model.intercept = state.intercept();
    model.l21_norm = group_l21_norm(design.matrix, state.beta);
    model.l1_norm = mthal::l1_norm(state.beta);
    model.terms.clear();
    for (std::size_t c = 0; c < design.num_columns(); ++c) {
        const double b = state.beta[static_cast<Eigen::Index>(c)];
        if (b == 0.0) continue;
        HalTerm t;
        t.group = design.group_of_column(c);
        t.basis = design.catalog[t.group];
        const int k = design.column_task[c];
        t.task_id = k < 0 ? -1 : design.task_ids[static_cast<std::size_t>(k)];
        t.coefficient = b;
        model.terms.push_back(std::move(t));
    }
    if (!std::isfinite(model.l21_norm)) throw NumericalError("fitted coefficients are not finite");
}

/// Column index in `rows` for each model covariate name, -1 when absent.
std::vector<int> map_columns(const std::vector<std::string>& names, const StackedDataset& rows) {
    std::unordered_map<std::string, int> where;
    for (std::size_t j = 0; j < rows.covariate_names.size(); ++j) where[rows.covariate_names[j]] = static_cast<int>(j);
    std::vector<int> pos(names.size(), -1);
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto it = where.find(names[j]);
        if (it != where.end()) pos[j] = it->second;
    }
    return pos;
}

int model_task_index(const std::vector<int>& task_ids, int label) {
    auto it = std::find(task_ids.begin(), task_ids.end(), label);
    if (it == task_ids.end()) throw DataError("task " + std::to_string(label) + " was not seen in training");
    return static_cast<int>(it - task_ids.begin());
}

} // namespace

// ---------------------------------------------------------------- MT-HAL

Vector MtHalModel::predict(const StackedDataset& raw) const {
    const StackedDataset rows = standardize_apply(standardizer, raw);
    const auto pos = map_columns(covariate_names, rows);
    Vector out = Vector::Constant(static_cast<Eigen::Index>(rows.rows()), intercept);

    for (std::size_t rk = 0; rk < rows.num_tasks(); ++rk) {
        const auto lo = rows.row_offsets[rk], hi = rows.row_offsets[rk + 1];
        if (lo == hi) continue;
        const int label = rows.task_ids[rk];
        const auto k = static_cast<std::size_t>(model_task_index(task_ids, label));
        for (const auto& t : terms) {
            if (t.task_id >= 0 && t.task_id != label) continue;
            const auto& cov = t.basis.section.covariates;
            if (t.task_id < 0 &&
                !std::all_of(cov.begin(), cov.end(), [&](int j) { return has_covariate[k][static_cast<std::size_t>(j)]; }))
                continue;
            for (int j : cov)
                if (pos[static_cast<std::size_t>(j)] < 0)
                    throw DataError("covariate '" + covariate_names[static_cast<std::size_t>(j)] + "' missing for task " +
                                    std::to_string(label));
            for (auto i = lo; i < hi; ++i) {
                bool on = true;
                for (std::size_t m = 0; m < cov.size() && on; ++m) {
                    const double v = rows.covariates(static_cast<Eigen::Index>(i), pos[static_cast<std::size_t>(cov[m])]);
                    if (std::isnan(v))
                        throw DataError("row " + std::to_string(i + 1) + ": covariate '" +
                                        covariate_names[static_cast<std::size_t>(cov[m])] + "' is missing");
                    on = v >= t.basis.knot[m];
                }
                if (on) out[static_cast<Eigen::Index>(i)] += t.coefficient;
            }
        }
    }
    return out;
}

FoldFitter mthal_fold_fitter(const EstimatorConfig& config) {
    return [config](const StackedDataset& train, const StackedDataset& valid, const std::vector<double>& grid) {
        const auto scaler = fit_scaling(config.hal_scaling, train);
        const auto tr = standardize_apply(scaler, train);
        const auto va = standardize_apply(scaler, valid);
        const auto design = build_design(tr, config.basis);
        const Problem problem{design.matrix, tr.outcomes, tr.weights};
        const auto path = fit_path(problem, grid, config.solver);
        return hal_path_predictions(design, path, va);
    };
}

MtHalModel fit_mthal(const std::vector<TaskDataset>& tasks, const EstimatorConfig& config) {
    return fit_mthal(stack(tasks, config.weights), config);
}

MtHalModel fit_mthal(const StackedDataset& data, const EstimatorConfig& config) {
    check_config(config);
    MtHalModel model;
    model.config = config;
    model.standardizer = fit_scaling(config.hal_scaling, data);
    const auto scaled = standardize_apply(model.standardizer, data);

    const auto design = build_design(scaled, config.basis);
    const Problem problem{design.matrix, scaled.outcomes, scaled.weights};
    model.lambda_max = lambda_max(problem);
    const auto grid = auto_grid(model.lambda_max, config.grid_size, config.grid_ratio);

    const auto folds = make_folds(data, config.folds, config.fold_scheme, config.seed);
    model.cv = cv_select(data, mthal_fold_fitter(config), grid, folds, config.threads);

    const double lambda = model.cv.selected_lambda();
    const auto path = fit_path(problem, grid_down_to(grid, lambda), config.solver);
    fill_hal_model(model, design, path.states.back(), lambda);
    return model;
}

MtHalModel fit_mthal_at(const StackedDataset& data, double lambda, const EstimatorConfig& config) {
    check_config(config);
    if (!(lambda >= 0.0)) throw UsageError("lambda must be nonnegative");
    MtHalModel model;
    model.config = config;
    model.standardizer = fit_scaling(config.hal_scaling, data);
    const auto scaled = standardize_apply(model.standardizer, data);
    const auto design = build_design(scaled, config.basis);
    const Problem problem{design.matrix, scaled.outcomes, scaled.weights};
    model.lambda_max = lambda_max(problem);
    const auto grid = auto_grid(model.lambda_max, config.grid_size, config.grid_ratio);
    const auto path = fit_path(problem, grid_down_to(grid, lambda), config.solver);
    fill_hal_model(model, design, path.states.back(), lambda);
    return model;
}

// ---------------------------------------------------------------- baselines

std::string to_string(BaselineKind kind) { return kind == BaselineKind::kMtLasso ? "mt-lasso" : "mt-l21"; }

BaselineDesign build_baseline_design(BaselineKind kind, const StackedDataset& data) {
    BaselineDesign d;
    auto& cols = d.matrix.columns;
    cols.n_rows = data.rows();
    d.intercepts.count = static_cast<int>(data.num_tasks());
    d.intercepts.of_row = data.task_index_of_rows();

    std::vector<std::uint32_t> rows;
    std::vector<double> vals;
    for (std::size_t j = 0; j < data.cols(); ++j) {
        for (std::size_t k = 0; k < data.num_tasks(); ++k) {
            if (!data.has_covariate[k][j]) continue;
            rows.clear();
            vals.clear();
            for (auto i = data.row_offsets[k]; i < data.row_offsets[k + 1]; ++i) {
                const double v = data.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (v != 0.0) {
                    rows.push_back(static_cast<std::uint32_t>(i));
                    vals.push_back(v);
                }
            }
            if (rows.empty()) continue;   // constant column after centering: no information
            cols.push_valued(rows, vals);
            d.column_task.push_back(static_cast<int>(k));
            d.column_covariate.push_back(static_cast<int>(j));
            if (kind == BaselineKind::kMtLasso) d.matrix.group_start.push_back(cols.cols());
        }
        if (kind == BaselineKind::kMtL21 && d.matrix.group_start.back() != cols.cols())
            d.matrix.group_start.push_back(cols.cols());
    }
    return d;
}

namespace {

void fill_baseline(BaselineModel& m, const StackedDataset& data, const BaselineDesign& design,
                   const CoefficientState& state) {
    m.task_ids = data.task_ids;
    m.covariate_names = data.covariate_names;
    m.has_covariate = data.has_covariate;
    m.intercepts = state.intercepts;
    m.coefficients.assign(data.num_tasks(), std::vector<double>(data.cols(), 0.0));
    for (std::size_t c = 0; c < design.column_task.size(); ++c)
        m.coefficients[static_cast<std::size_t>(design.column_task[c])][static_cast<std::size_t>(design.column_covariate[c])] =
            state.beta[static_cast<Eigen::Index>(c)];
}

/// Predictions of a per-task linear model on already-scaled rows.
Vector linear_predict(const BaselineModel& m, const StackedDataset& rows) {
    const auto pos = map_columns(m.covariate_names, rows);
    Vector out(static_cast<Eigen::Index>(rows.rows()));
    for (std::size_t rk = 0; rk < rows.num_tasks(); ++rk) {
        const auto lo = rows.row_offsets[rk], hi = rows.row_offsets[rk + 1];
        if (lo == hi) continue;
        const auto k = static_cast<std::size_t>(model_task_index(m.task_ids, rows.task_ids[rk]));
        for (std::size_t j = 0; j < m.covariate_names.size(); ++j)
            if (m.coefficients[k][j] != 0.0 && pos[j] < 0)
                throw DataError("covariate '" + m.covariate_names[j] + "' missing for task " +
                                std::to_string(rows.task_ids[rk]));
        for (auto i = lo; i < hi; ++i) {
            double v = m.intercepts[k];
            for (std::size_t j = 0; j < m.covariate_names.size(); ++j) {
                const double b = m.coefficients[k][j];
                if (b == 0.0) continue;
                const double x = rows.covariates(static_cast<Eigen::Index>(i), pos[j]);
                if (std::isnan(x))
                    throw DataError("row " + std::to_string(i + 1) + ": covariate '" + m.covariate_names[j] +
                                    "' is missing");
                v += b * x;
            }
            out[static_cast<Eigen::Index>(i)] = v;
        }
    }
    return out;
}

} // namespace

std::vector<std::vector<double>> BaselineModel::raw_coefficients() const {
    auto raw = coefficients;
    if (standardizer.identity()) return raw;
    for (std::size_t k = 0; k < raw.size(); ++k)
        for (std::size_t j = 0; j < raw[k].size(); ++j) raw[k][j] /= standardizer.scale[k][j];
    return raw;
}

std::vector<double> BaselineModel::raw_intercepts() const {
    auto raw = intercepts;
    if (standardizer.identity()) return raw;
    for (std::size_t k = 0; k < raw.size(); ++k)
        for (std::size_t j = 0; j < coefficients[k].size(); ++j)
            raw[k] -= coefficients[k][j] * standardizer.location[k][j] / standardizer.scale[k][j];
    return raw;
}

Vector BaselineModel::predict(const StackedDataset& rows) const {
    return linear_predict(*this, standardize_apply(standardizer, rows));
}

FoldFitter baseline_fold_fitter(BaselineKind kind, const EstimatorConfig& config) {
    return [kind, config](const StackedDataset& train, const StackedDataset& valid, const std::vector<double>& grid) {
        BaselineModel m;
        m.standardizer = fit_scaling(config.baseline_scaling, train);
        const auto tr = standardize_apply(m.standardizer, train);
        const auto va = standardize_apply(m.standardizer, valid);
        const auto design = build_baseline_design(kind, tr);
        const Problem problem{design.matrix, tr.outcomes, tr.weights, design.intercepts};
        const auto path = fit_path(problem, grid, config.solver);
        Matrix pred(static_cast<Eigen::Index>(va.rows()), static_cast<Eigen::Index>(grid.size()));
        for (std::size_t b = 0; b < grid.size(); ++b) {
            fill_baseline(m, tr, design, path.states[b]);
            pred.col(static_cast<Eigen::Index>(b)) = linear_predict(m, va);
        }
        return pred;
    };
}

BaselineModel fit_baseline(BaselineKind kind, const std::vector<TaskDataset>& tasks, const EstimatorConfig& config) {
    return fit_baseline(kind, stack(tasks, config.weights), config);
}

BaselineModel fit_baseline(BaselineKind kind, const StackedDataset& data, const EstimatorConfig& config) {
    check_config(config);
    BaselineModel m;
    m.kind = kind;
    m.config = config;
    m.standardizer = fit_scaling(config.baseline_scaling, data);
    const auto scaled = standardize_apply(m.standardizer, data);
    const auto design = build_baseline_design(kind, scaled);
    const Problem problem{design.matrix, scaled.outcomes, scaled.weights, design.intercepts};
    m.lambda_max = lambda_max(problem);
    const auto grid = auto_grid(m.lambda_max, config.grid_size, config.grid_ratio);

    const auto folds = make_folds(data, config.folds, config.fold_scheme, config.seed);
    m.cv = cv_select(data, baseline_fold_fitter(kind, config), grid, folds, config.threads);
    m.lambda = m.cv.selected_lambda();
    const auto path = fit_path(problem, grid_down_to(grid, m.lambda), config.solver);
    fill_baseline(m, scaled, design, path.states.back());
    return m;
}

// ---------------------------------------------------------------- support

Support extract_support(const MtHalModel& model) {
    Support s;
    for (const auto& t : model.terms) {
        if (std::abs(t.coefficient) <= kSupportThreshold) continue;
        const auto& cov = t.basis.section.covariates;
        for (std::size_t k = 0; k < model.task_ids.size(); ++k) {
            const int label = model.task_ids[k];
            if (t.task_id >= 0 && t.task_id != label) continue;
            if (!std::all_of(cov.begin(), cov.end(), [&](int j) { return model.has_covariate[k][static_cast<std::size_t>(j)]; }))
                continue;
            for (int j : cov) s.emplace(label, j);
        }
    }
    return s;
}

Support extract_support(const BaselineModel& model) {
    Support s;
    for (std::size_t k = 0; k < model.coefficients.size(); ++k)
        for (std::size_t j = 0; j < model.coefficients[k].size(); ++j)
            if (std::abs(model.coefficients[k][j]) > kSupportThreshold) s.emplace(model.task_ids[k], static_cast<int>(j));
    return s;
}

// ---------------------------------------------------------------- archive

namespace {

constexpr const char* kFormat = "mthal-model";
constexpr int kVersion = 1;

const char* scaling_name(Scaling s) {
    switch (s) {
    case Scaling::kNone: return "none";
    case Scaling::kPerTask: return "per-task";
    case Scaling::kPooled: return "pooled";
    }
    return "none";
}

Scaling scaling_from(const std::string& s) {
    if (s == "none") return Scaling::kNone;
    if (s == "per-task") return Scaling::kPerTask;
    if (s == "pooled") return Scaling::kPooled;
    throw DataError("model archive: unknown scaling '" + s + "'");
}

json config_json(const EstimatorConfig& c) {
    return {
        {"max_degree", c.basis.max_degree},
        {"per_covariate_max", c.basis.per_covariate_max},
        {"task_interaction", c.basis.task_interaction},
        {"deduplicate", c.basis.deduplicate},
        {"prune", c.basis.prune},
        {"column_budget", c.basis.column_budget},
        {"algorithm", c.solver.algorithm == SolverAlgorithm::kBlockCoordinate ? "cd" : "fista"},
        {"tol", c.solver.tol},
        {"max_iter", c.solver.max_iter},
        {"grid_size", c.grid_size},
        {"grid_ratio", c.grid_ratio},
        {"folds", c.folds},
        {"fold_scheme", c.fold_scheme == FoldScheme::kClustered ? "clustered" : "task-balanced"},
        {"seed", c.seed},
        {"weights", c.weights == WeightScheme::kTaskBalanced ? "task-balanced" : "uniform"},
        {"hal_scaling", scaling_name(c.hal_scaling)},
        {"baseline_scaling", scaling_name(c.baseline_scaling)},
    };
}

EstimatorConfig config_from(const json& j) {
    EstimatorConfig c = default_estimator_config();
    c.basis.max_degree = j.at("max_degree").get<int>();
    c.basis.per_covariate_max = j.at("per_covariate_max").get<int>();
    c.basis.task_interaction = j.at("task_interaction").get<bool>();
    c.basis.deduplicate = j.at("deduplicate").get<bool>();
    c.basis.prune = j.at("prune").get<bool>();
    c.basis.column_budget = j.at("column_budget").get<std::size_t>();
    c.solver.algorithm =
        j.at("algorithm").get<std::string>() == "fista" ? SolverAlgorithm::kAcceleratedProximal : SolverAlgorithm::kBlockCoordinate;
    c.solver.tol = j.at("tol").get<double>();
    c.solver.max_iter = j.at("max_iter").get<std::size_t>();
    c.grid_size = j.at("grid_size").get<std::size_t>();
    c.grid_ratio = j.at("grid_ratio").get<double>();
    c.folds = j.at("folds").get<int>();
    c.fold_scheme = j.at("fold_scheme").get<std::string>() == "clustered" ? FoldScheme::kClustered : FoldScheme::kTaskBalanced;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.weights = j.at("weights").get<std::string>() == "task-balanced" ? WeightScheme::kTaskBalanced : WeightScheme::kUniform;
    c.hal_scaling = scaling_from(j.at("hal_scaling").get<std::string>());
    c.baseline_scaling = scaling_from(j.at("baseline_scaling").get<std::string>());
    return c;
}

json standardizer_json(const Standardizer& s) {
    if (s.identity()) return nullptr;
    return {
        {"scope", s.scope == StandardizeScope::kPooled ? "pooled" : "per-task"},
        {"task_ids", s.task_ids},
        {"covariate_names", s.covariate_names},
        {"location", s.location},
        {"scale", s.scale},
        {"constant", s.constant},
    };
}

Standardizer standardizer_from(const json& j) {
    Standardizer s;
    if (j.is_null()) return s;
    s.scope = j.at("scope").get<std::string>() == "pooled" ? StandardizeScope::kPooled : StandardizeScope::kPerTask;
    s.task_ids = j.at("task_ids").get<std::vector<int>>();
    s.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    s.location = j.at("location").get<std::vector<std::vector<double>>>();
    s.scale = j.at("scale").get<std::vector<std::vector<double>>>();
    s.constant = j.at("constant").get<std::vector<std::vector<bool>>>();
    return s;
}

json cv_json(const CvRiskTable& t) {
    return {{"grid", t.grid}, {"mean_risk", t.mean_risk}, {"fold_risk", t.fold_risk}, {"selected", t.selected}};
}

CvRiskTable cv_from(const json& j) {
    CvRiskTable t;
    t.grid = j.at("grid").get<std::vector<double>>();
    t.mean_risk = j.at("mean_risk").get<std::vector<double>>();
    t.fold_risk = j.at("fold_risk").get<std::vector<std::vector<double>>>();
    t.selected = j.at("selected").get<std::size_t>();
    return t;
}

json header(const std::string& kind) { return {{"format", kFormat}, {"version", kVersion}, {"kind", kind}}; }

} // namespace

void save_model(std::ostream& os, const MtHalModel& m) {
    json terms = json::array();
    for (const auto& t : m.terms)
        terms.push_back({{"section", t.basis.section.covariates},
                         {"knot", t.basis.knot},
                         {"source_row", t.basis.source_row},
                         {"task", t.task_id},
                         {"group", t.group},
                         {"coefficient", t.coefficient}});
    json j = header("mt-hal");
    j["config"] = config_json(m.config);
    j["standardizer"] = standardizer_json(m.standardizer);
    j["task_ids"] = m.task_ids;
    j["covariate_names"] = m.covariate_names;
    j["has_covariate"] = m.has_covariate;
    j["task_interaction"] = m.task_interaction;
    j["design"] = {{"groups", m.design_groups}, {"columns", m.design_columns}};
    j["lambda_max"] = m.lambda_max;
    j["lambda"] = m.lambda;
    j["intercept"] = m.intercept;
    j["l21_norm"] = m.l21_norm;
    j["l1_norm"] = m.l1_norm;
    j["terms"] = std::move(terms);
    j["cv"] = cv_json(m.cv);
    os << j.dump(1) << '\n';
}

void save_model(std::ostream& os, const BaselineModel& m) {
    json j = header(to_string(m.kind));
    j["config"] = config_json(m.config);
    j["standardizer"] = standardizer_json(m.standardizer);
    j["task_ids"] = m.task_ids;
    j["covariate_names"] = m.covariate_names;
    j["has_covariate"] = m.has_covariate;
    j["lambda_max"] = m.lambda_max;
    j["lambda"] = m.lambda;
    j["intercepts"] = m.intercepts;
    j["coefficients"] = m.coefficients;
    j["cv"] = cv_json(m.cv);
    os << j.dump(1) << '\n';
}

LoadedModel load_model(std::istream& is) {
    LoadedModel out;
    try {
        const json j = json::parse(is);
        if (j.at("format").get<std::string>() != kFormat) throw DataError("not a model archive");
        const int version = j.at("version").get<int>();
        if (version != kVersion) throw DataError("unsupported model archive version " + std::to_string(version));
        out.kind = j.at("kind").get<std::string>();
        if (out.kind == "mt-hal") {
            auto& m = out.hal;
            m.config = config_from(j.at("config"));
            m.standardizer = standardizer_from(j.at("standardizer"));
            m.task_ids = j.at("task_ids").get<std::vector<int>>();
            m.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
            m.has_covariate = j.at("has_covariate").get<std::vector<std::vector<bool>>>();
            m.task_interaction = j.at("task_interaction").get<bool>();
            m.design_groups = j.at("design").at("groups").get<std::size_t>();
            m.design_columns = j.at("design").at("columns").get<std::size_t>();
            m.lambda_max = j.at("lambda_max").get<double>();
            m.lambda = j.at("lambda").get<double>();
            m.intercept = j.at("intercept").get<double>();
            m.l21_norm = j.at("l21_norm").get<double>();
            m.l1_norm = j.at("l1_norm").get<double>();
            for (const auto& t : j.at("terms")) {
                HalTerm term;
                term.basis.section.covariates = t.at("section").get<std::vector<int>>();
                term.basis.knot = t.at("knot").get<std::vector<double>>();
                term.basis.source_row = t.at("source_row").get<std::size_t>();
                term.task_id = t.at("task").get<int>();
                term.group = t.at("group").get<std::size_t>();
                term.coefficient = t.at("coefficient").get<double>();
                if (term.basis.knot.size() != term.basis.section.covariates.size())
                    throw DataError("model archive: knot and section lengths differ");
                for (int c : term.basis.section.covariates)
                    if (c < 0 || static_cast<std::size_t>(c) >= m.covariate_names.size())
                        throw DataError("model archive: covariate index out of range");
                m.terms.push_back(std::move(term));
            }
            m.cv = cv_from(j.at("cv"));
        } else if (out.kind == "mt-lasso" || out.kind == "mt-l21") {
            auto& m = out.baseline;
            m.kind = out.kind == "mt-lasso" ? BaselineKind::kMtLasso : BaselineKind::kMtL21;
            m.config = config_from(j.at("config"));
            m.standardizer = standardizer_from(j.at("standardizer"));
            m.task_ids = j.at("task_ids").get<std::vector<int>>();
            m.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
            m.has_covariate = j.at("has_covariate").get<std::vector<std::vector<bool>>>();
            m.lambda_max = j.at("lambda_max").get<double>();
            m.lambda = j.at("lambda").get<double>();
            m.intercepts = j.at("intercepts").get<std::vector<double>>();
            m.coefficients = j.at("coefficients").get<std::vector<std::vector<double>>>();
            if (m.intercepts.size() != m.task_ids.size() || m.coefficients.size() != m.task_ids.size())
                throw DataError("model archive: coefficient table does not match the task list");
            m.cv = cv_from(j.at("cv"));
        } else {
            throw DataError("model archive: unknown model kind '" + out.kind + "'");
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("model archive: ") + e.what());
    }
    return out;
}

Vector LoadedModel::predict(const StackedDataset& rows) const {
    return kind == "mt-hal" ? hal.predict(rows) : baseline.predict(rows);
}

} // namespace mthal
