#include "canopy/features.hpp"

#include "canopy/csv.hpp"
#include "canopy/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

namespace canopy {

void validate(const FeatureMatrix& f) {
    if (static_cast<Index>(f.crown_ids.size()) != f.values.rows()) {
        throw ValidationError("feature matrix has " + std::to_string(f.values.rows()) + " rows but " +
                                  std::to_string(f.crown_ids.size()) + " crown ids",
                              "crown_ids");
    }
    if (f.values.cols() < 1) throw ValidationError("feature matrix has no features", "features");
    for (Index r = 0; r < f.values.rows(); ++r)
        for (Index c = 0; c < f.values.cols(); ++c)
            if (!std::isfinite(f.values(r, c))) {
                throw ValidationError("non-finite feature at row " + std::to_string(r) + ", column " +
                                          std::to_string(c) + " (crown '" + f.crown_ids[static_cast<std::size_t>(r)] +
                                          "')",
                                      "features");
            }
}

ResampledChip resample_chip(const CrownChip& chip, Index side, BackgroundFill background) {
    const Mask& mask = chip.mask;
    Index r0 = mask.rows(), r1 = -1, c0 = mask.cols(), c1 = -1;
    for (Index r = 0; r < mask.rows(); ++r)
        for (Index c = 0; c < mask.cols(); ++c)
            if (mask(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    if (r1 < 0) throw ValidationError("chip '" + chip.crown_id + "' has no unmasked pixels", "chip");
    const Index h = r1 - r0 + 1, w = c1 - c0 + 1;

    ResampledChip out;
    out.mask.resize(side, side);
    std::vector<Index> src_r(static_cast<std::size_t>(side)), src_c(static_cast<std::size_t>(side));
    for (Index i = 0; i < side; ++i) {
        src_r[static_cast<std::size_t>(i)] =
            r0 + std::min(h - 1, static_cast<Index>(std::floor((static_cast<double>(i) + 0.5) * h / side)));
        src_c[static_cast<std::size_t>(i)] =
            c0 + std::min(w - 1, static_cast<Index>(std::floor((static_cast<double>(i) + 0.5) * w / side)));
    }
    for (Index i = 0; i < side; ++i)
        for (Index j = 0; j < side; ++j)
            out.mask(i, j) = mask(src_r[static_cast<std::size_t>(i)], src_c[static_cast<std::size_t>(j)]);

    for (const auto& band : chip.patch.bands()) {
        double fill = 0.0;
        if (background == BackgroundFill::band_mean) {
            double s = 0.0;
            Index n = 0;
            for (Index r = 0; r < mask.rows(); ++r)
                for (Index c = 0; c < mask.cols(); ++c)
                    if (mask(r, c)) {
                        s += band.values(r, c);
                        ++n;
                    }
            fill = s / static_cast<double>(n);
        }
        Plane p(side, side);
        for (Index i = 0; i < side; ++i)
            for (Index j = 0; j < side; ++j)
                p(i, j) = out.mask(i, j) ? band.values(src_r[static_cast<std::size_t>(i)], src_c[static_cast<std::size_t>(j)])
                                         : static_cast<float>(fill);
        out.planes.push_back(std::move(p));
    }
    return out;
}

Eigen::VectorXd extract_builtin_features(const CrownChip& chip, const FeatureOptions& options) {
    if (options.side < kMinFeatureSide) {
        throw ValidationError("feature side must be >= " + std::to_string(kMinFeatureSide), "side");
    }
    if (chip.valid_pixels < options.min_pixels || chip.mask.count() < options.min_pixels) {
        throw ValidationError("chip '" + chip.crown_id + "' has fewer than " + std::to_string(options.min_pixels) +
                                  " valid pixels",
                              "chip");
    }
    const ResampledChip rs = resample_chip(chip, options.side, options.background);
    const Index n_bands = static_cast<Index>(rs.planes.size());
    Eigen::VectorXd f = Eigen::VectorXd::Zero(builtin_feature_length(n_bands));
    const double n = static_cast<double>(rs.mask.count());

    Index at = 0;
    for (const Plane& p : rs.planes) {
        double sum = 0.0;
        for (Index i = 0; i < p.rows(); ++i)
            for (Index j = 0; j < p.cols(); ++j)
                if (rs.mask(i, j)) sum += p(i, j);
        const double mean = sum / n;
        double m2 = 0.0, m3 = 0.0;
        Eigen::VectorXd hist = Eigen::VectorXd::Zero(kIntensityBins);
        for (Index i = 0; i < p.rows(); ++i)
            for (Index j = 0; j < p.cols(); ++j) {
                if (!rs.mask(i, j)) continue;
                const double d = p(i, j) - mean;
                m2 += d * d;
                m3 += d * d * d;
                const auto b = std::clamp<Index>(static_cast<Index>(std::floor(p(i, j) * kIntensityBins)), 0,
                                                 kIntensityBins - 1);
                hist(b) += 1.0;
            }
        m2 /= n;
        m3 /= n;
        const double sd = std::sqrt(m2);
        f(at++) = mean;
        f(at++) = sd;
        f(at++) = sd > 0.0 ? m3 / (sd * sd * sd) : 0.0;
        f.segment(at, kIntensityBins) = hist / n;
        at += kIntensityBins;
    }

    // Orientation histogram of the band-averaged image, magnitude weighted.
    Plane gray = Plane::Zero(options.side, options.side);
    for (const Plane& p : rs.planes) gray += p;
    gray /= static_cast<float>(std::max<Index>(1, n_bands));
    Eigen::VectorXd orient = Eigen::VectorXd::Zero(kOrientationBins);
    const double bin_width = 2.0 * std::numbers::pi / kOrientationBins;
    for (Index i = 1; i + 1 < options.side; ++i) {
        for (Index j = 1; j + 1 < options.side; ++j) {
            if (!rs.mask(i, j)) continue;
            const double gx = static_cast<double>(gray(i, j + 1)) - gray(i, j - 1);
            const double gy = static_cast<double>(gray(i + 1, j)) - gray(i - 1, j);
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0) continue;
            double a = std::atan2(gy, gx);
            if (a < 0.0) a += 2.0 * std::numbers::pi;
            const auto b = std::min<Index>(static_cast<Index>(a / bin_width), kOrientationBins - 1);
            orient(b) += mag;
        }
    }
    const double total = orient.sum();
    if (total > 0.0) orient /= total;
    f.segment(at, kOrientationBins) = orient;
    return f;
}

FeatureMatrix builtin_feature_matrix(std::span<const CrownChip> chips, const FeatureOptions& options) {
    if (chips.empty()) throw ValidationError("no chips to extract features from", "chips");
    FeatureMatrix out;
    out.source = {FeatureSource::Kind::builtin_descriptor, "builtin"};
    const Index n_bands = static_cast<Index>(chips.front().patch.band_count());
    out.values.resize(static_cast<Index>(chips.size()), builtin_feature_length(n_bands));
    for (std::size_t i = 0; i < chips.size(); ++i) {
        if (static_cast<Index>(chips[i].patch.band_count()) != n_bands) {
            throw ValidationError("chip '" + chips[i].crown_id + "' has a different band count", "chips");
        }
        out.crown_ids.push_back(chips[i].crown_id);
        out.values.row(static_cast<Index>(i)) = extract_builtin_features(chips[i], options).transpose();
    }
    return out;
}

FeatureMatrix import_embeddings(const std::vector<std::string>& crown_ids,
                                const std::filesystem::path& embedding_file) {
    const CsvTable t = read_csv(embedding_file);
    if (t.header.empty() || t.header.front() != "crown_id") {
        throw ValidationError("embedding header must start with crown_id", "crown_id");
    }
    const Index dims = static_cast<Index>(t.header.size()) - 1;
    if (dims < 1) throw ValidationError("embedding file has no dimensions", "dims");
    for (Index d = 0; d < dims; ++d) {
        if (t.header[static_cast<std::size_t>(d + 1)] != "dim_" + std::to_string(d)) {
            throw ValidationError("embedding column " + std::to_string(d + 1) + " must be named dim_" +
                                      std::to_string(d),
                                  "header");
        }
    }
    std::string name = embedding_file.stem().string();
    for (const auto& comment : t.comments) {
        const auto pos = comment.find("source=");
        if (pos != std::string::npos) {
            name = comment.substr(pos + 7);
            while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
        }
    }

    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!row_of.emplace(t.rows[r][0], r).second) {
            throw ValidationError("duplicate crown_id '" + t.rows[r][0] + "' in embeddings", "crown_id");
        }
    }
    {
        std::unordered_map<std::string, int> seen;
        for (const auto& id : crown_ids)
            if (seen[id]++) throw ValidationError("duplicate crown_id '" + id + "' in manifest", "crown_id");
    }
    for (const auto& id : crown_ids) {
        if (!row_of.count(id)) throw ValidationError("crown_id '" + id + "' has no embedding row", "crown_id");
    }
    if (t.rows.size() != crown_ids.size()) {
        throw ValidationError("embedding file has " + std::to_string(t.rows.size()) + " rows, manifest has " +
                                  std::to_string(crown_ids.size()) + " crowns",
                              "rows");
    }

    FeatureMatrix out;
    out.crown_ids = crown_ids;
    out.source = {FeatureSource::Kind::imported_embedding, name};
    out.values.resize(static_cast<Index>(crown_ids.size()), dims);
    for (std::size_t i = 0; i < crown_ids.size(); ++i) {
        const std::size_t r = row_of.at(crown_ids[i]);
        for (Index d = 0; d < dims; ++d) {
            const std::string& cell = t.rows[r][static_cast<std::size_t>(d + 1)];
            double v;
            try {
                v = parse_number(cell, "embedding");
            } catch (const ValidationError&) {
                throw ValidationError("invalid embedding value '" + cell + "' at row " + std::to_string(r + 1) +
                                          ", column " + t.header[static_cast<std::size_t>(d + 1)],
                                      "embedding");
            }
            if (!std::isfinite(v)) {
                throw ValidationError("non-finite embedding value at row " + std::to_string(r + 1) + ", column " +
                                          t.header[static_cast<std::size_t>(d + 1)] + " (crown '" + crown_ids[i] +
                                          "')",
                                      "embedding");
            }
            out.values(static_cast<Index>(i), d) = v;
        }
    }
    return out;
}

FeatureMatrix import_embeddings(const std::filesystem::path& manifest, const std::filesystem::path& embedding_file) {
    const CsvTable m = read_csv(manifest);
    const std::size_t id = m.column("crown_id");
    std::vector<std::string> ids;
    ids.reserve(m.rows.size());
    for (const auto& row : m.rows) ids.push_back(row[id]);
    return import_embeddings(ids, embedding_file);
}

void write_embeddings(const FeatureMatrix& features, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write embeddings '" + path.string() + "'");
    out << "# source=" << features.source.name << '\n';
    std::vector<std::string> header{"crown_id"};
    for (Index d = 0; d < features.cols(); ++d) header.push_back("dim_" + std::to_string(d));
    write_csv_row(out, header);
    for (Index r = 0; r < features.rows(); ++r) {
        std::vector<std::string> row{features.crown_ids[static_cast<std::size_t>(r)]};
        for (Index d = 0; d < features.cols(); ++d) row.push_back(format_number(features.values(r, d)));
        write_csv_row(out, row);
    }
    if (!out) throw IoError("failed writing embeddings '" + path.string() + "'");
}

}  // namespace canopy
