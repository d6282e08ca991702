#pragma once

#include <functional>
#include <string>

namespace clens {

/// Sink for non-fatal warnings (degenerate model, merged degree class, ...).
/// Defaults to standard error; tests may swap it to capture or silence.
using WarningSink = std::function<void(const std::string&)>;

void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

} // namespace clens
