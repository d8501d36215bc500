#pragma once

#include <string>
#include <string_view>

namespace phishtrain::service {

/// Rewrites model-generated email markup so it is safe to show a trainee.
///
/// Allow-list based: unknown tags are unwrapped (their text kept), active
/// content (script, iframe, object, svg, ...) is dropped with its contents,
/// and only presentational attributes survive. Nothing is loaded from the
/// network: src/srcset/background attributes, <link>, CSS url() and @import
/// are removed. Link targets are kept for inspection as data-href, never as a
/// live href, and forms lose their action.
std::string sanitize_markup(std::string_view markup);

}  // namespace phishtrain::service
