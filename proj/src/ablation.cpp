// SPDX-License-Identifier: Apache-2.0
#include "mask3d/ablation.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "mask3d/error.hpp"

namespace mask3d {

std::vector<KeepRatio> appendix_grid() {
  std::vector<KeepRatio> grid;
  for (double c : {0.2, 0.5, 0.8, 1.0})
    for (double d : {0.0, 0.2, 0.5, 0.8, 1.0}) grid.push_back({c, d});
  return grid;
}

std::vector<KeepRatio> parse_grid(const std::string& text) {
  std::vector<KeepRatio> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ContractError("grid entry '" + item + "' is not of the form p_c:p_d");
    KeepRatio r;
    try {
      std::size_t used = 0;
      r.p_c = std::stod(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument(item);
      const auto rest = item.substr(colon + 1);
      r.p_d = std::stod(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ContractError("grid entry '" + item + "' is not numeric");
    }
    if (!(r.p_c >= 0 && r.p_c <= 1 && r.p_d >= 0 && r.p_d <= 1))
      throw ContractError("grid entry '" + item + "' outside [0,1]");
    grid.push_back(r);
  }
  if (grid.empty()) throw ContractError("empty ablation grid");
  return grid;
}

std::string row_label(const KeepRatio& r) {
  return (r.p_c == 1.0 && r.p_d == 0.0) ? "pure-depth-baseline" : "";
}

std::vector<AblationRow> ablation_sweep(std::span<const RgbdFrame> train_set, std::span<const RgbdFrame> val,
                                        std::span<const KeepRatio> grid, const ModelConfig& model_config,
                                        const TrainConfig& train_config, const ProbeConfig& probe_config,
                                        const RowCallback& on_row) {
  std::vector<AblationRow> rows;
  for (const auto& ratio : grid) {
    TrainConfig cfg = train_config;
    cfg.p_c = ratio.p_c;
    cfg.p_d = ratio.p_d;
    auto model = init_model<float>(model_config, cfg.seed);
    train(model, train_set, cfg);
    const auto ev = evaluate(model, val, cfg);
    AblationRow row{ratio.p_c, ratio.p_d, ev.loss, ev.rmse, 0.0, cfg.seed, row_label(ratio)};
    if (!val.empty()) row.probe_miou = linear_probe(model, train_set, val, probe_config).miou;
    rows.push_back(row);
    if (on_row) on_row(rows.back());
  }
  return rows;
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "p_c,p_d,val_loss,val_rmse,probe_miou,seed,label\n" << std::setprecision(8);
  for (const auto& r : rows)
    out << r.p_c << ',' << r.p_d << ',' << r.val_loss << ',' << r.val_rmse << ',' << r.probe_miou << ',' << r.seed
        << ',' << r.label << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace mask3d
