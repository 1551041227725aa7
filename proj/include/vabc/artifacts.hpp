#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vabc/datasets.hpp"
#include "vabc/models.hpp"

namespace vabc {

struct GridSpec {
    float min_x = -1.5f, max_x = 2.5f;
    float min_y = -1.0f, max_y = 1.5f;
    std::size_t res_x = 30, res_y = 30;

    void validate() const;
};

// All artifact functions encode deterministically (z = mu, no sampling).

struct FieldRow {
    float x1, x2;
    float g1, g2;     // negated loss gradient (steepest descent direction)
    bool finite = true;
};

// -dL/dx over a 2-D input grid for the given branch label and gamma/beta.
std::vector<FieldRow> gradient_field(const VabcModel& model, const GridSpec& grid, int y,
                                     float gamma, float beta);

// CSV header: x1,x2,g1,g2,y,gamma,beta
void write_field_csv(const std::vector<FieldRow>& rows, int y, float gamma, float beta,
                     const std::string& path);

struct ManifoldGrid {
    std::size_t res = 0;
    std::size_t cell_dim = 0;              // decoder output width per cell
    std::vector<Tensor> cells;             // row-major over the grid
};

// Decodes a res x res grid of 2-D latents over [lo, hi]^2.
ManifoldGrid manifold_grid(const VabcModel& model, float lo, float hi, std::size_t res);

// Cell-major CSV of raw pixel values, one row per cell.
void write_manifold_csv(const ManifoldGrid& grid, const std::string& path);

// (res*28) x (res*28) 8-bit grayscale mosaic; requires 784-wide cells.
void write_manifold_png(const ManifoldGrid& grid, const std::string& path);

struct ReconstructionPanel {
    std::vector<std::vector<float>> originals;
    std::vector<std::vector<float>> reconstructions;   // raw decoder means
    std::vector<std::vector<float>> binarized;         // thresholded copies
    float threshold = 0.5f;
};

ReconstructionPanel reconstruction_panel(const VabcModel& model,
                                         const std::vector<std::vector<float>>& examples,
                                         float binarize_threshold = 0.5f);

struct EllipseRow {
    float mu1, mu2;
    float two_sigma1, two_sigma2;
    Concept concept_label;
    int digit;
};

// One row per example: encoder outputs mu and 2*sigma plus metadata.
std::vector<EllipseRow> latent_ellipses(const VabcModel& model, const DataFold& examples);

// CSV header: mu1,mu2,two_sigma1,two_sigma2,concept,digit
void write_ellipses_csv(const std::vector<EllipseRow>& rows, const std::string& path);

// Minimal grayscale PNG (8-bit, zlib-compressed, zeroed timestamps).
void write_gray_png(const std::string& path, std::size_t width, std::size_t height,
                    const std::vector<unsigned char>& pixels);

}  // namespace vabc
