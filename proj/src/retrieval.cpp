// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "priorforge/error.hpp"
#include "priorforge/rng.hpp"
#include "priorforge/winding.hpp"

namespace priorforge {

namespace {

constexpr std::string_view kCatalogHeader = "# prior-forge catalog v1 dim=";
constexpr std::string_view kRankingHeader = "# prior-forge ranking v1";

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double vnorm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void sort_ranking(RankedList& r) {
    std::sort(r.begin(), r.end(), [](const Ranked& a, const Ranked& b) {
        return a.score > b.score || (a.score == b.score && a.id < b.id);
    });
}

}  // namespace

void Catalog::validate() const {
    if (dimension == 0) throw DataError("catalog dimension must be positive");
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (e.id.empty()) throw DataError("catalog entry with empty id");
        if (!ids.insert(e.id).second) throw DataError("duplicate catalog id '" + e.id + "'");
        if (e.embedding.size() != dimension) throw DataError("catalog entry '" + e.id + "': embedding dimension");
        if (std::abs(vnorm(e.embedding) - 1.0) > 1e-6) throw DataError("catalog entry '" + e.id + "': embedding not unit length");
        const auto r = static_cast<std::uint32_t>(kDescriptorResolution);
        if (e.descriptor.dims != std::array<std::uint32_t, 3>{r, r, r}) {
            throw DataError("catalog entry '" + e.id + "': descriptor must be 32^3");
        }
    }
}

const CatalogEntry* Catalog::find(std::string_view id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

Catalog load_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open catalog: " + path.string());
    const auto base = path.parent_path();
    std::string line;
    if (!std::getline(in, line) || line.rfind(kCatalogHeader, 0) != 0) {
        throw DataError(path.string() + ": missing catalog header");
    }
    Catalog cat;
    try {
        cat.dimension = std::stoul(line.substr(kCatalogHeader.size()));
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed catalog dimension");
    }
    std::size_t lineno = 1;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() < 3 || fields.size() > 4) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected id, mesh and descriptor columns");
        }
        CatalogEntry e;
        e.id = fields[0];
        e.mesh = resolve(fields[1]);
        e.descriptor_path = resolve(fields[2]);
        if (fields.size() == 4 && !fields[3].empty()) e.tags = split(fields[3], ',');
        std::string emb;
        if (!std::getline(in, emb)) throw DataError(path.string() + ": entry '" + e.id + "' has no embedding line");
        ++lineno;
        std::istringstream is(emb);
        double x;
        while (is >> x) e.embedding.push_back(x);
        if (!is.eof()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed embedding");
        e.descriptor = threshold_grid(read_grid(e.descriptor_path), 0.5);
        cat.entries.push_back(std::move(e));
    }
    cat.validate();
    return cat;
}

void write_catalog(const Catalog& catalog, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write catalog: " + path.string());
    out << kCatalogHeader << catalog.dimension << '\n';
    char buf[32];
    for (const auto& e : catalog.entries) {
        out << e.id << '\t' << e.mesh.generic_string() << '\t' << e.descriptor_path.generic_string();
        if (!e.tags.empty()) {
            out << '\t';
            for (std::size_t i = 0; i < e.tags.size(); ++i) out << (i ? "," : "") << e.tags[i];
        }
        out << '\n';
        for (std::size_t i = 0; i < e.embedding.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", e.embedding[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
}

std::vector<double> embed_text_toy(std::string_view text, std::size_t dimension) {
    if (dimension == 0) throw ConfigError("embedding dimension must be positive");
    std::vector<double> v(dimension, 0.0);
    std::string token;
    std::size_t tokens = 0;
    auto flush = [&] {
        if (token.empty()) return;
        const std::uint64_t h = fnv1a64(token);
        v[h % dimension] += (mix64(h) >> 63) ? -1.0 : 1.0;
        ++tokens;
        token.clear();
    };
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            token.push_back(static_cast<char>(std::tolower(u)));
        } else {
            flush();
        }
    }
    flush();
    if (tokens == 0) throw DataError("cannot embed empty text");
    const double n = vnorm(v);
    // Colliding tokens with opposite signs can cancel completely.
    if (n == 0.0) throw DataError("text embedding cancelled to zero; use a larger dimension");
    for (double& x : v) x /= n;
    return v;
}

RankedList retrieve(const Catalog& catalog, const std::vector<double>& query, std::size_t k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (query.size() != catalog.dimension) {
        throw DataError("query dimension " + std::to_string(query.size()) + " does not match catalog dimension " +
                        std::to_string(catalog.dimension));
    }
    const double qn = vnorm(query);
    if (!(qn > 0.0)) throw DataError("query embedding has zero norm");
    RankedList out(catalog.entries.size());
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& e = catalog.entries[i];
        double dot = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) dot += e.embedding[j] * query[j];
        out[i] = {e.id, dot / (qn * vnorm(e.embedding))};
    }
    sort_ranking(out);
    if (out.size() > k) out.resize(k);
    return out;
}

OccupancyGrid shape_descriptor(const DensityGrid& grid) {
    const auto r = static_cast<std::uint32_t>(kDescriptorResolution);
    OccupancyGrid out;
    out.dims = {r, r, r};
    out.threshold = 0.5;
    out.values.resize(static_cast<std::size_t>(r) * r * r);
    std::size_t idx = 0;
    for (std::uint32_t k = 0; k < r; ++k) {
        for (std::uint32_t j = 0; j < r; ++j) {
            for (std::uint32_t i = 0; i < r; ++i) out.values[idx++] = grid.sample(cell_center(r, i, j, k)) > 0.5 ? 1 : 0;
        }
    }
    return out;
}

OccupancyGrid shape_descriptor(const DensityField& field) {
    return to_occupancy_grid(field, kDescriptorResolution, 0.5);
}

OccupancyGrid mesh_descriptor(const TriangleMesh& mesh) {
    const Bvh bvh(normalize(mesh));
    const auto r = static_cast<std::uint32_t>(kDescriptorResolution);
    OccupancyGrid out;
    out.dims = {r, r, r};
    out.threshold = 0.5;
    out.values = occupancy_labels(bvh, cell_centers(r));
    return out;
}

RankedList reretrieve(const Catalog& catalog, const RankedList& candidates, const OccupancyGrid& descriptor) {
    if (candidates.empty()) throw DataError("re-retrieval needs at least one candidate");
    const auto r = static_cast<std::uint32_t>(kDescriptorResolution);
    if (descriptor.dims != std::array<std::uint32_t, 3>{r, r, r}) throw DataError("descriptor must be 32^3");
    const std::size_t n = std::min(candidates.size(), kReretrieveCandidates);
    RankedList out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const CatalogEntry* e = catalog.find(candidates[i].id);
        if (e == nullptr) throw DataError("candidate '" + candidates[i].id + "' is not in the catalog");
        out[i] = {e->id, iou(descriptor, e->descriptor)};
    }
    sort_ranking(out);
    return out;
}

void write_ranking(const RankedList& ranking, std::ostream& out) {
    out << kRankingHeader << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", ranking[i].score);
        out << (i + 1) << '\t' << ranking[i].id << '\t' << buf << '\n';
    }
}

void write_ranking(const RankedList& ranking, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write ranking: " + path.string());
    write_ranking(ranking, out);
}

RankedList read_ranking(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ranking: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind(kRankingHeader, 0) != 0) {
        throw DataError(path.string() + ": missing ranking header");
    }
    RankedList out;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line, '\t');
        if (f.size() != 3) throw DataError(path.string() + ": malformed ranking line");
        try {
            out.push_back({f[1], std::stod(f[2])});
        } catch (const std::exception&) {
            throw DataError(path.string() + ": malformed ranking score");
        }
    }
    return out;
}

std::vector<double> read_embedding(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::vector<double> v;
        double x;
        while (is >> x) v.push_back(x);
        if (!is.eof() || v.empty()) throw DataError(path.string() + ": malformed embedding");
        return v;
    }
    throw DataError(path.string() + ": no embedding found");
}

}  // namespace priorforge
