"""Well-known IRIs used across the package.

The ``knowspace.dev`` namespaces are owned by this project; the W3C ones are
standard vocabulary.
"""

from __future__ import annotations

from knowspace.rdf import IriRef

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_DECIMAL = IriRef(XSD + "decimal")
XSD_DOUBLE = IriRef(XSD + "double")
XSD_INTEGER = IriRef(XSD + "integer")

WGS84 = "http://www.w3.org/2003/01/geo/wgs84_pos#"
GEO_LAT = IriRef(WGS84 + "lat")
GEO_LONG = IriRef(WGS84 + "long")

KS = "http://knowspace.dev/ns/ks#"
KS_MIME_TYPE = IriRef(KS + "mimeType")
KS_IDENTIFIES = IriRef(KS + "identifies")

GEO = "http://knowspace.dev/ns/geo#"
GEO_MIN_LAT = IriRef(GEO + "minLat")
GEO_MIN_LON = IriRef(GEO + "minLon")
GEO_MAX_LAT = IriRef(GEO + "maxLat")
GEO_MAX_LON = IriRef(GEO + "maxLon")
GEO_WITHIN = IriRef(GEO + "within")

ACL = "http://knowspace.dev/ns/acl#"
ACL_READER = IriRef(ACL + "reader")
ACL_WRITER = IriRef(ACL + "writer")
ACL_PART_OF = IriRef(ACL + "partOf")

PROV = "http://knowspace.dev/ns/prov#"
PROV_DERIVED_FROM = IriRef(PROV + "wasDerivedFrom")
PROV_HAS_ANCESTOR = IriRef(PROV + "hasAncestor")
