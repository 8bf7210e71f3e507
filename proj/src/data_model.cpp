#include "catefusion/data_model.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "catefusion/errors.hpp"

namespace catefusion {

namespace {
void default_warning(const std::string& msg) { std::cerr << "[cate_fusion] warning: " << msg << "\n"; }
void (*g_warning_handler)(const std::string&) = &default_warning;
}  // namespace

void set_warning_handler(void (*handler)(const std::string&)) {
    g_warning_handler = handler ? handler : &default_warning;
}

void emit_warning(const std::string& msg) { g_warning_handler(msg); }

std::vector<int> SourceSample::arm_rows(double arm) const {
    std::vector<int> rows;
    for (int i = 0; i < n(); ++i)
        if (treatment[i] == arm) rows.push_back(i);
    return rows;
}

std::vector<Violation> validate(const FusedSample& fused) {
    std::vector<Violation> out;
    const BlockPartition& bp = fused.partition;
    if (bp.p_u < 0 || bp.p_z < 1 || bp.p_v < 0)
        out.push_back({"partition", "block sizes must be nonnegative with p_z >= 1"});
    if (fused.rct.covariates.cols() != bp.p_r())
        out.push_back({"rct width", "RCT covariate width != p_u + p_z"});
    if (fused.os.n() > 0 && fused.os.covariates.cols() != bp.p_o())
        out.push_back({"os width", "OS covariate width != p_z + p_v"});

    auto check_source = [&](const SourceSample& s, const char* name) {
        if (s.treatment.size() != s.covariates.rows() || s.outcome.size() != s.covariates.rows())
            out.push_back({"length", std::string(name) + ": treatment/outcome length mismatch"});
        for (Eigen::Index i = 0; i < s.treatment.size(); ++i)
            if (s.treatment[i] != 1.0 && s.treatment[i] != -1.0) {
                out.push_back({"treatment coding", std::string(name) + ": treatment not in {-1,+1}"});
                break;
            }
        if (!s.covariates.allFinite() || !s.outcome.allFinite())
            out.push_back({"missing", std::string(name) + ": non-finite values present"});
    };
    check_source(fused.rct, "rct");
    if (fused.os.n() > 0) check_source(fused.os, "os");

    bool has_treat = false, has_control = false;
    for (Eigen::Index i = 0; i < fused.rct.treatment.size(); ++i) {
        has_treat |= fused.rct.treatment[i] == 1.0;
        has_control |= fused.rct.treatment[i] == -1.0;
    }
    if (!(has_treat && has_control)) out.push_back({"single-arm RCT", "RCT must contain both arms"});

    if (fused.rct.attached_v &&
        (fused.rct.attached_v->rows() != fused.rct.n() || fused.rct.attached_v->cols() != bp.p_v))
        out.push_back({"attached V", "attached V shape mismatch"});
    return out;
}

Matrix extract_block(const SourceSample& sample, Block block) {
    const BlockPartition& bp = sample.partition;
    const bool is_rct = sample.source == Source::rct;
    switch (block) {
        case Block::U:
            if (!is_rct) throw BlockUnavailable("U is not observed in the OS");
            return sample.covariates.leftCols(bp.p_u);
        case Block::Z:
            return is_rct ? sample.covariates.rightCols(bp.p_z) : sample.covariates.leftCols(bp.p_z);
        case Block::V:
            if (is_rct) {
                if (!sample.attached_v)
                    throw BlockUnavailable("V is not observed in the RCT and no V has been attached");
                return *sample.attached_v;
            }
            return sample.covariates.rightCols(bp.p_v);
        case Block::Xr:
            if (!is_rct) throw BlockUnavailable("X^r is only defined for the RCT view");
            return sample.covariates;
        case Block::Xo:
            if (is_rct) throw BlockUnavailable("X^o is only defined for the OS view");
            return sample.covariates;
        case Block::XrPlusVhat:
            if (!is_rct) throw BlockUnavailable("(X^r, Vhat) is only defined for the RCT view");
            if (!sample.attached_v) throw BlockUnavailable("no V attached to the RCT sample");
            return hcat(sample.covariates, *sample.attached_v);
    }
    throw BlockUnavailable("unknown block");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

FusedSample read_fused_csv(const std::string& csv_path, const std::string& blockmap_path) {
    std::ifstream jf(blockmap_path);
    if (!jf) throw std::runtime_error("read_fused_csv: cannot open " + blockmap_path);
    nlohmann::json blockmap = nlohmann::json::parse(jf);
    std::vector<std::string> u_names = blockmap.value("U", std::vector<std::string>{});
    std::vector<std::string> z_names = blockmap.value("Z", std::vector<std::string>{});
    std::vector<std::string> v_names = blockmap.value("V", std::vector<std::string>{});
    if (z_names.empty()) throw std::runtime_error("read_fused_csv: block map must name at least one Z column");

    std::ifstream cf(csv_path);
    if (!cf) throw std::runtime_error("read_fused_csv: cannot open " + csv_path);
    std::string line;
    if (!std::getline(cf, line)) throw std::runtime_error("read_fused_csv: empty file");
    std::vector<std::string> header = split_csv_line(line);
    std::map<std::string, int> col_of;
    for (std::size_t j = 0; j < header.size(); ++j) col_of[trim(header[j])] = static_cast<int>(j);

    auto require = [&](const std::string& name) {
        auto it = col_of.find(name);
        if (it == col_of.end()) throw std::runtime_error("read_fused_csv: missing column '" + name + "'");
        return it->second;
    };
    int c_treat = require("treatment");
    int c_out = require("outcome");
    int c_src = require("source");
    std::vector<int> u_cols, z_cols, v_cols;
    for (const auto& nm : u_names) u_cols.push_back(require(nm));
    for (const auto& nm : z_names) z_cols.push_back(require(nm));
    for (const auto& nm : v_names) v_cols.push_back(require(nm));

    std::vector<std::vector<double>> rct_rows, os_rows, rct_v_rows;
    std::vector<double> rct_a, rct_y, os_a, os_y;
    bool saw_01_treatment = false;
    bool rct_has_complete_v = true;
    int line_no = 1;

    auto parse_cell = [&](const std::vector<std::string>& cells, int col) -> double {
        std::string s = col < static_cast<int>(cells.size()) ? trim(cells[(std::size_t)col]) : "";
        if (s.empty()) return std::nan("");
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0')
            throw std::runtime_error("read_fused_csv: line " + std::to_string(line_no) +
                                     ": cannot parse numeric cell '" + s + "'");
        return v;
    };

    while (std::getline(cf, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        std::string src = trim(cells[(std::size_t)c_src]);
        bool is_rct;
        if (src == "rct" || src == "r")
            is_rct = true;
        else if (src == "os" || src == "o")
            is_rct = false;
        else
            throw std::runtime_error("read_fused_csv: line " + std::to_string(line_no) +
                                     ": source must be 'rct' or 'os'");

        double a = parse_cell(cells, c_treat);
        double y = parse_cell(cells, c_out);
        if (std::isnan(a) || std::isnan(y))
            throw std::runtime_error("read_fused_csv: line " + std::to_string(line_no) +
                                     ": treatment/outcome missing");
        if (a == 0.0) saw_01_treatment = true;

        auto read_block = [&](const std::vector<int>& cols, bool required) {
            std::vector<double> vals;
            vals.reserve(cols.size());
            for (int c : cols) {
                double v = parse_cell(cells, c);
                if (required && std::isnan(v))
                    throw std::runtime_error("read_fused_csv: line " + std::to_string(line_no) +
                                             ": missing value in an observed block (complete cases required)");
                vals.push_back(v);
            }
            return vals;
        };

        if (is_rct) {
            std::vector<double> u = read_block(u_cols, true);
            std::vector<double> z = read_block(z_cols, true);
            std::vector<double> v = read_block(v_cols, false);
            std::vector<double> row = u;
            row.insert(row.end(), z.begin(), z.end());
            rct_rows.push_back(std::move(row));
            bool complete_v = !v.empty();
            for (double val : v) complete_v &= !std::isnan(val);
            rct_has_complete_v &= complete_v;
            rct_v_rows.push_back(std::move(v));
            rct_a.push_back(a);
            rct_y.push_back(y);
        } else {
            std::vector<double> z = read_block(z_cols, true);
            std::vector<double> v = read_block(v_cols, true);
            for (int c : u_cols) {
                if (!std::isnan(parse_cell(cells, c)))
                    throw std::runtime_error("read_fused_csv: line " + std::to_string(line_no) +
                                             ": U cells must be empty for OS rows");
            }
            std::vector<double> row = z;
            row.insert(row.end(), v.begin(), v.end());
            os_rows.push_back(std::move(row));
            os_a.push_back(a);
            os_y.push_back(y);
        }
    }

    if (saw_01_treatment) {
        emit_warning("treatment coded {0,1}; remapping 0 -> -1");
        for (auto& a : rct_a)
            if (a == 0.0) a = -1.0;
        for (auto& a : os_a)
            if (a == 0.0) a = -1.0;
    }

    FusedSample fused;
    fused.partition = {static_cast<int>(u_cols.size()), static_cast<int>(z_cols.size()),
                       static_cast<int>(v_cols.size())};

    auto fill = [](const std::vector<std::vector<double>>& rows, const std::vector<double>& a,
                   const std::vector<double>& y, Source src, const BlockPartition& bp) {
        SourceSample s;
        s.source = src;
        s.partition = bp;
        int width = src == Source::rct ? bp.p_r() : bp.p_o();
        s.covariates.resize(static_cast<Eigen::Index>(rows.size()), width);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < width; ++j)
                s.covariates(static_cast<Eigen::Index>(i), j) = rows[i][(std::size_t)j];
        s.treatment = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
        s.outcome = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
        return s;
    };
    fused.rct = fill(rct_rows, rct_a, rct_y, Source::rct, fused.partition);
    fused.os = fill(os_rows, os_a, os_y, Source::os, fused.partition);

    if (!v_cols.empty() && rct_has_complete_v && !rct_v_rows.empty()) {
        Matrix v(static_cast<Eigen::Index>(rct_v_rows.size()), static_cast<Eigen::Index>(v_cols.size()));
        for (std::size_t i = 0; i < rct_v_rows.size(); ++i)
            for (std::size_t j = 0; j < v_cols.size(); ++j)
                v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rct_v_rows[i][j];
        fused.rct.attached_v = std::move(v);
        emit_warning("RCT rows carry a complete V block; attached as oracle V");
    }
    return fused;
}

}  // namespace catefusion
