// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "priorforge/field.hpp"
#include "priorforge/mesh.hpp"

namespace priorforge {

inline constexpr int kDescriptorResolution = 32;
inline constexpr std::size_t kReretrieveCandidates = 100;

struct CatalogEntry {
    std::string id;
    std::filesystem::path mesh;
    std::filesystem::path descriptor_path;
    std::vector<double> embedding;  // unit length
    OccupancyGrid descriptor;       // 32^3
    std::vector<std::string> tags;
};

struct Catalog {
    std::size_t dimension = 0;
    std::vector<CatalogEntry> entries;

    /// Checks unique ids, unit embeddings of the catalog dimension, 32^3 descriptors.
    void validate() const;
    const CatalogEntry* find(std::string_view id) const;
};

struct Ranked {
    std::string id;
    double score = 0.0;
};
using RankedList = std::vector<Ranked>;

/// Catalog text format: `# prior-forge catalog v1 dim=D`, then per entry a line
/// `id<TAB>mesh_path<TAB>descriptor_path[<TAB>tag,tag]` and a line of D
/// embedding components. Relative paths resolve against the catalog's directory.
Catalog load_catalog(const std::filesystem::path& path);
void write_catalog(const Catalog& catalog, const std::filesystem::path& path);

/// Bag of lowercase alphanumeric tokens, each hashed with 64-bit FNV-1a to
/// bucket h % D with sign from the top bit of mix64(h), then L2-normalized.
std::vector<double> embed_text_toy(std::string_view text, std::size_t dimension);

/// Top-k entries by cosine similarity, ties broken by ascending id.
RankedList retrieve(const Catalog& catalog, const std::vector<double>& query, std::size_t k);

/// 32^3 occupancy at cell centers, threshold 0.5.
OccupancyGrid shape_descriptor(const DensityGrid& grid);
OccupancyGrid shape_descriptor(const DensityField& field);
/// Descriptor of a mesh after normalization, by winding-number labels.
OccupancyGrid mesh_descriptor(const TriangleMesh& mesh);

/// Re-ranks the first kReretrieveCandidates candidates by descriptor IoU.
RankedList reretrieve(const Catalog& catalog, const RankedList& candidates, const OccupancyGrid& descriptor);

/// `# prior-forge ranking v1` then `rank<TAB>id<TAB>score` lines.
void write_ranking(const RankedList& ranking, std::ostream& out);
void write_ranking(const RankedList& ranking, const std::filesystem::path& path);
RankedList read_ranking(const std::filesystem::path& path);

/// One line of whitespace-separated components; '#' lines are skipped.
std::vector<double> read_embedding(const std::filesystem::path& path);

}  // namespace priorforge
