#pragma once

#include <optional>
#include <string>
#include <vector>

#include "catefusion/types.hpp"

namespace catefusion {

/// Covariate blocks in the fixed global column order (U, Z, V).
/// The RCT view is the (U, Z) slice, the OS view the (Z, V) slice.
struct BlockPartition {
    int p_u = 0;
    int p_z = 0;
    int p_v = 0;

    int p() const { return p_u + p_z + p_v; }
    int p_r() const { return p_u + p_z; }  // RCT covariate width
    int p_o() const { return p_z + p_v; }  // OS covariate width
};

enum class Source { rct, os };

enum class Block { U, Z, V, Xr, Xo, XrPlusVhat };

/// One source's data. Covariates hold the source's own view: (U, Z) for the
/// RCT, (Z, V) for the OS. `attached_v` optionally carries per-row V values
/// for RCT rows: the true V in oracle/simulation mode, or an imputed Vhat.
struct SourceSample {
    Matrix covariates;
    Vector treatment;  // entries in {-1, +1}
    Vector outcome;
    Source source = Source::rct;
    BlockPartition partition;
    std::optional<Matrix> attached_v;

    int n() const { return static_cast<int>(covariates.rows()); }
    std::vector<int> arm_rows(double arm) const;
};

struct FusedSample {
    SourceSample rct;
    SourceSample os;
    BlockPartition partition;
};

struct Violation {
    std::string code;
    std::string detail;
};

/// Checks every structural invariant; violations are data, not exceptions.
std::vector<Violation> validate(const FusedSample& fused);

/// Column-sliced view of one block, preserving row order. Throws
/// BlockUnavailable when the block does not exist in that source (e.g. V
/// requested from an RCT sample with no attached V).
Matrix extract_block(const SourceSample& sample, Block block);

/// CSV ingestion. The CSV has a header row; `treatment`, `outcome` and
/// `source` are reserved column names, and the sidecar JSON maps block names
/// to covariate column names: {"U": [...], "Z": [...], "V": [...]}.
/// Cells outside a source's own blocks must be empty; cells inside them must
/// be complete (complete cases only). Treatment is accepted as {-1,1} or
/// {0,1}; the latter is remapped with a logged warning. RCT rows may carry a
/// complete V block, which is attached as oracle V.
FusedSample read_fused_csv(const std::string& csv_path, const std::string& blockmap_path);

/// Warning sink for ingestion and fitting messages (default: stderr).
void set_warning_handler(void (*handler)(const std::string&));
void emit_warning(const std::string& msg);

}  // namespace catefusion
