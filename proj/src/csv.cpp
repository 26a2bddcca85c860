#include <fstream>
#include <vector>

#include "drshift/errors.hpp"
#include "drshift/scenario.hpp"

namespace drshift {

namespace {

struct Table {
    std::vector<std::vector<double>> rows;
    std::vector<int> line_numbers;
};

Table read_table(const std::filesystem::path& path, std::size_t columns, bool header)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open CSV file: " + path.string());
    }
    Table t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (header && line_no == 1) {
            continue;
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != columns) {
            throw ConfigError(path.string() + " row " + std::to_string(line_no) + ": expected " +
                              std::to_string(columns) + " columns, found " + std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(columns);
        for (const auto& f : fields) {
            const auto v = parse_double(f);
            if (!v) {
                throw ConfigError(path.string() + " row " + std::to_string(line_no) +
                                  ": malformed number '" + f + "'");
            }
            row.push_back(*v);
        }
        t.rows.push_back(std::move(row));
        t.line_numbers.push_back(line_no);
    }
    return t;
}

} // namespace

PairedSample load_csv(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                      const CsvSchema& schema)
{
    if (schema.dim < 1) {
        throw ConfigError("CSV schema dim must be positive");
    }
    const auto d = static_cast<std::size_t>(schema.dim);
    const Table src = read_table(source_path, d + 1, schema.header);
    const Table tgt = read_table(target_path, d, schema.header);
    if (src.rows.empty()) {
        throw ConfigError("source nonempty required");
    }
    if (tgt.rows.empty()) {
        throw ConfigError("target nonempty required");
    }

    PairedSample s;
    s.source_x.resize(static_cast<Eigen::Index>(src.rows.size()), schema.dim);
    s.source_y.resize(static_cast<Eigen::Index>(src.rows.size()));
    double max_abs = 0.0;
    for (std::size_t i = 0; i < src.rows.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            s.source_x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = src.rows[i][k];
        }
        const double y = src.rows[i][d];
        if (std::abs(y) > 1.0 && !schema.rescale_labels) {
            throw ConfigError(source_path.string() + " row " + std::to_string(src.line_numbers[i]) +
                              ": label " + format_double(y) + " outside [-1, 1] (enable rescaling to accept)");
        }
        max_abs = std::max(max_abs, std::abs(y));
        s.source_y[static_cast<Eigen::Index>(i)] = y;
    }
    if (schema.rescale_labels && max_abs > 1.0) {
        s.source_y /= max_abs;
    }
    s.target_x.resize(static_cast<Eigen::Index>(tgt.rows.size()), schema.dim);
    for (std::size_t i = 0; i < tgt.rows.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            s.target_x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = tgt.rows[i][k];
        }
    }
    s.provenance = {Provenance::Kind::ingested, 0, source_path.string()};
    return s;
}

void write_csv(const PairedSample& sample, const std::filesystem::path& source_path,
               const std::filesystem::path& target_path)
{
    std::ofstream src(source_path);
    std::ofstream tgt(target_path);
    if (!src || !tgt) {
        throw NumericalError("cannot write CSV output next to " + source_path.string());
    }
    for (Eigen::Index i = 0; i < sample.n_source(); ++i) {
        for (Eigen::Index k = 0; k < sample.dim(); ++k) {
            src << format_double(sample.source_x(i, k)) << ',';
        }
        src << format_double(sample.source_y[i]) << '\n';
    }
    for (Eigen::Index i = 0; i < sample.n_target(); ++i) {
        for (Eigen::Index k = 0; k < sample.dim(); ++k) {
            tgt << (k ? "," : "") << format_double(sample.target_x(i, k));
        }
        tgt << '\n';
    }
}

} // namespace drshift
