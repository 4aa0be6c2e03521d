//! Registration, login and password recovery.
//!
//! A user is identified by an Ed25519 public key. Personal details are
//! encrypted under a random detail key before they reach the ledger; that key
//! is itself wrapped twice, once under the password and once under the
//! recovery answers, so a forgotten password can be replaced without losing
//! access to the details.

mod cipher;
mod session;

use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, DecodeResult, Decoder, Encode, Encoder, Decode};
use crate::crypto::{serde_hex, Keypair, UserId};
use crate::ledger::SignedTransaction;

pub use cipher::{
    decrypt_details, derive_key, encrypt_details, KdfParams, PersonalDetails, SecretVerifier,
    WrappedKey, KEY_LEN, NONCE_LEN, SALT_LEN,
};
pub use session::{Session, SessionStore, DEFAULT_SESSION_TTL_MS};

pub const TAG_REGISTER: u8 = 0x01;
pub const TAG_ROTATE: u8 = 0x02;
pub const RECOVERY_QUESTIONS: usize = 3;
pub const MIN_PASSWORD_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("user {0} is already registered")]
    AlreadyRegistered(UserId),
    #[error("password must be at least 8 characters")]
    WeakPassword,
    #[error("invalid email address")]
    InvalidEmail,
    #[error("recovery needs exactly 3 non-empty questions and answers")]
    InvalidRecoverySet,
    #[error("unknown user")]
    UnknownUser,
    #[error("wrong password; use password recovery")]
    BadPassword,
    #[error("recovery answers did not match")]
    RecoveryFailed,
    #[error("session expired")]
    SessionExpired,
    #[error("unknown session")]
    SessionUnknown,
    #[error("ciphertext failed authentication")]
    DecryptAuthFailure,
}

/// Actors of the value chain, plus block-producing validators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SeedSupplier,
    Farmer,
    SugarMill,
    Distributor,
    Retailer,
    Consumer,
    Validator,
}

impl Role {
    /// The linear custody order, seed supplier first.
    pub const CHAIN: [Role; 6] = [
        Role::SeedSupplier,
        Role::Farmer,
        Role::SugarMill,
        Role::Distributor,
        Role::Retailer,
        Role::Consumer,
    ];

    pub const ALL: [Role; 7] = [
        Role::SeedSupplier,
        Role::Farmer,
        Role::SugarMill,
        Role::Distributor,
        Role::Retailer,
        Role::Consumer,
        Role::Validator,
    ];

    /// Position in the custody chain; `None` for validators.
    pub fn stage(self) -> Option<usize> {
        Self::CHAIN.iter().position(|r| *r == self)
    }

    pub fn next_in_chain(self) -> Option<Role> {
        self.stage().and_then(|i| Self::CHAIN.get(i + 1).copied())
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(code: u8) -> Option<Role> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::SeedSupplier => "seed_supplier",
            Role::Farmer => "farmer",
            Role::SugarMill => "sugar_mill",
            Role::Distributor => "distributor",
            Role::Retailer => "retailer",
            Role::Consumer => "consumer",
            Role::Validator => "validator",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == norm || (norm == "mill" && *r == Role::SugarMill))
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

impl Encode for Role {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.code());
    }
}

impl Decode for Role {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        let tag = dec.u8()?;
        Role::from_code(tag).ok_or(DecodeError::InvalidTag { what: "role", tag })
    }
}

/// Recovery answers are compared case-insensitively, ignoring surrounding
/// whitespace.
pub fn normalize_answer(answer: &str) -> String {
    answer.trim().to_lowercase()
}

fn recovery_secret(answers: &[impl AsRef<str>]) -> Vec<u8> {
    let mut enc = Encoder::new();
    for a in answers {
        enc.str(&normalize_answer(a.as_ref()));
    }
    enc.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryQuestionSet {
    pub questions: [String; RECOVERY_QUESTIONS],
    pub answer_verifiers: [SecretVerifier; RECOVERY_QUESTIONS],
}

impl RecoveryQuestionSet {
    /// All answers must match; one miss fails the whole set.
    pub fn all_match(&self, answers: &[String; RECOVERY_QUESTIONS]) -> bool {
        // Evaluate every verifier so timing does not reveal which answer failed.
        self.answer_verifiers
            .iter()
            .zip(answers)
            .map(|(v, a)| v.matches(&normalize_answer(a)))
            .fold(true, |acc, ok| acc & ok)
    }
}

impl Encode for RecoveryQuestionSet {
    fn encode(&self, enc: &mut Encoder) {
        for q in &self.questions {
            enc.str(q);
        }
        for v in &self.answer_verifiers {
            enc.value(v);
        }
    }
}

impl Decode for RecoveryQuestionSet {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            questions: [dec.string()?, dec.string()?, dec.string()?],
            answer_verifiers: [dec.value()?, dec.value()?, dec.value()?],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub role: Role,
    #[serde(with = "serde_hex")]
    pub encrypted_details: Vec<u8>,
    #[serde(with = "serde_hex")]
    pub detail_nonce: [u8; NONCE_LEN],
    pub password_key: WrappedKey,
    pub recovery_key: WrappedKey,
    pub auth_verifier: SecretVerifier,
    pub recovery: RecoveryQuestionSet,
    pub created_at: u64,
}

impl UserRecord {
    pub fn check_password(&self, password: &str) -> Result<(), IdentityError> {
        if self.auth_verifier.matches(password) {
            Ok(())
        } else {
            Err(IdentityError::BadPassword)
        }
    }

    pub fn detail_key(&self, password: &str) -> Result<[u8; KEY_LEN], IdentityError> {
        self.check_password(password)?;
        self.password_key.unwrap_key(password.as_bytes())
    }

    pub fn decrypt_details(&self, password: &str) -> Result<PersonalDetails, IdentityError> {
        let key = self.detail_key(password)?;
        decrypt_details(&self.encrypted_details, &self.detail_nonce, &key)
    }

    /// Apply a committed credential rotation to this view of the record.
    pub fn apply_rotation(&mut self, rot: &CredentialRotation) {
        self.auth_verifier = rot.auth_verifier.clone();
        self.password_key = rot.password_key.clone();
    }
}

impl Encode for UserRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.user_id)
            .value(&self.role)
            .bytes(&self.encrypted_details)
            .bytes(&self.detail_nonce)
            .value(&self.password_key)
            .value(&self.recovery_key)
            .value(&self.auth_verifier)
            .value(&self.recovery)
            .u64(self.created_at);
    }
}

impl Decode for UserRecord {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            user_id: dec.value()?,
            role: dec.value()?,
            encrypted_details: dec.bytes()?.to_vec(),
            detail_nonce: dec.fixed("detail nonce")?,
            password_key: dec.value()?,
            recovery_key: dec.value()?,
            auth_verifier: dec.value()?,
            recovery: dec.value()?,
            created_at: dec.u64()?,
        })
    }
}

/// Replaces the password verifier and the password-wrapped detail key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialRotation {
    pub user_id: UserId,
    pub auth_verifier: SecretVerifier,
    pub password_key: WrappedKey,
    pub rotated_at: u64,
}

impl Encode for CredentialRotation {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.user_id)
            .value(&self.auth_verifier)
            .value(&self.password_key)
            .u64(self.rotated_at);
    }
}

impl Decode for CredentialRotation {
    fn decode(dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        Ok(Self {
            user_id: dec.value()?,
            auth_verifier: dec.value()?,
            password_key: dec.value()?,
            rotated_at: dec.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentityEvent {
    Register(UserRecord),
    RotateCredentials(CredentialRotation),
}

impl IdentityEvent {
    pub fn tag(&self) -> u8 {
        match self {
            IdentityEvent::Register(_) => TAG_REGISTER,
            IdentityEvent::RotateCredentials(_) => TAG_ROTATE,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            IdentityEvent::Register(_) => "register",
            IdentityEvent::RotateCredentials(_) => "rotate_credentials",
        }
    }

    pub fn user_id(&self) -> UserId {
        match self {
            IdentityEvent::Register(r) => r.user_id,
            IdentityEvent::RotateCredentials(r) => r.user_id,
        }
    }

    pub(crate) fn encode_body(&self, enc: &mut Encoder) {
        match self {
            IdentityEvent::Register(r) => r.encode(enc),
            IdentityEvent::RotateCredentials(r) => r.encode(enc),
        }
    }

    pub(crate) fn decode_body(tag: u8, dec: &mut Decoder<'_>) -> DecodeResult<Self> {
        match tag {
            TAG_REGISTER => Ok(IdentityEvent::Register(dec.value()?)),
            TAG_ROTATE => Ok(IdentityEvent::RotateCredentials(dec.value()?)),
            _ => Err(DecodeError::InvalidTag {
                what: "identity event",
                tag,
            }),
        }
    }
}

/// Read access to the committed user registry.
pub trait UserDirectory {
    fn user(&self, id: &UserId) -> Option<&UserRecord>;
}

impl UserDirectory for std::collections::BTreeMap<UserId, UserRecord> {
    fn user(&self, id: &UserId) -> Option<&UserRecord> {
        self.get(id)
    }
}

/// Input to [`register_user`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationForm {
    pub name: String,
    pub email: String,
    pub phone: String,
    pub password: String,
    pub role: Role,
    /// Question/answer pairs, exactly three.
    pub recovery: Vec<(String, String)>,
}

/// Result of a registration. `keypair` is the only copy of the private key.
#[derive(Debug, Clone)]
pub struct Registration {
    pub user_id: UserId,
    pub keypair: Keypair,
    pub transaction: SignedTransaction,
}

pub fn validate_email(email: &str) -> Result<(), IdentityError> {
    let mut parts = email.split('@');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(local), Some(domain), None) if !local.is_empty() && !domain.is_empty() => Ok(()),
        _ => Err(IdentityError::InvalidEmail),
    }
}

pub fn validate_password(password: &str) -> Result<(), IdentityError> {
    if password.chars().count() < MIN_PASSWORD_LEN {
        Err(IdentityError::WeakPassword)
    } else {
        Ok(())
    }
}

/// Register with a freshly generated keypair.
pub fn register_user<D, R>(
    dir: &D,
    form: &RegistrationForm,
    kdf: KdfParams,
    now: u64,
    rng: &mut R,
) -> Result<Registration, IdentityError>
where
    D: UserDirectory + ?Sized,
    R: RngCore + CryptoRng,
{
    let keypair = Keypair::generate(rng);
    register_with_keypair(dir, keypair, form, kdf, now, rng)
}

/// Register a caller-supplied key. Fails if that key is already on the ledger.
pub fn register_with_keypair<D, R>(
    dir: &D,
    keypair: Keypair,
    form: &RegistrationForm,
    kdf: KdfParams,
    now: u64,
    rng: &mut R,
) -> Result<Registration, IdentityError>
where
    D: UserDirectory + ?Sized,
    R: RngCore + CryptoRng,
{
    let user_id = keypair.user_id();
    if dir.user(&user_id).is_some() {
        return Err(IdentityError::AlreadyRegistered(user_id));
    }
    validate_password(&form.password)?;
    validate_email(&form.email)?;
    if form.recovery.len() != RECOVERY_QUESTIONS
        || form
            .recovery
            .iter()
            .any(|(q, a)| q.trim().is_empty() || normalize_answer(a).is_empty())
    {
        return Err(IdentityError::InvalidRecoverySet);
    }

    let mut detail_key = [0u8; KEY_LEN];
    rng.fill_bytes(&mut detail_key);
    let details = PersonalDetails {
        name: form.name.clone(),
        email: form.email.clone(),
        phone: form.phone.clone(),
    };
    let (encrypted_details, detail_nonce) = encrypt_details(&details, &detail_key, rng);
    let answers: Vec<&str> = form.recovery.iter().map(|(_, a)| a.as_str()).collect();
    let q = |i: usize| form.recovery[i].0.clone();
    let v = |i: usize, rng: &mut R| SecretVerifier::new(&normalize_answer(&form.recovery[i].1), kdf, rng);
    let recovery = RecoveryQuestionSet {
        questions: [q(0), q(1), q(2)],
        answer_verifiers: [v(0, rng), v(1, rng), v(2, rng)],
    };
    let record = UserRecord {
        user_id,
        role: form.role,
        encrypted_details,
        detail_nonce,
        password_key: WrappedKey::wrap(&detail_key, form.password.as_bytes(), kdf, rng),
        recovery_key: WrappedKey::wrap(&detail_key, &recovery_secret(&answers), kdf, rng),
        auth_verifier: SecretVerifier::new(&form.password, kdf, rng),
        recovery,
        created_at: now,
    };
    let transaction = SignedTransaction::sign(&keypair, IdentityEvent::Register(record), now);
    Ok(Registration {
        user_id,
        keypair,
        transaction,
    })
}

/// Check credentials and open a session.
pub fn login<D, R>(
    dir: &D,
    sessions: &SessionStore,
    user_id: &UserId,
    password: &str,
    now: u64,
    rng: &mut R,
) -> Result<Session, IdentityError>
where
    D: UserDirectory + ?Sized,
    R: RngCore + CryptoRng,
{
    let record = dir.user(user_id).ok_or(IdentityError::UnknownUser)?;
    record.check_password(password)?;
    Ok(sessions.issue(*user_id, now, rng))
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub session: Session,
    pub transaction: SignedTransaction,
}

/// Replace a forgotten password after all three recovery answers match.
///
/// `signer` submits the rotation: either the user's own key or a validator
/// acting for the user. The new password must meet the usual length rule.
#[allow(clippy::too_many_arguments)]
pub fn recover_password<D, R>(
    dir: &D,
    sessions: &SessionStore,
    signer: &Keypair,
    user_id: &UserId,
    answers: &[String; RECOVERY_QUESTIONS],
    new_password: &str,
    kdf: KdfParams,
    now: u64,
    rng: &mut R,
) -> Result<Recovery, IdentityError>
where
    D: UserDirectory + ?Sized,
    R: RngCore + CryptoRng,
{
    let record = dir.user(user_id).ok_or(IdentityError::UnknownUser)?;
    if !record.recovery.all_match(answers) {
        return Err(IdentityError::RecoveryFailed);
    }
    validate_password(new_password)?;
    let detail_key = record
        .recovery_key
        .unwrap_key(&recovery_secret(answers))
        .map_err(|_| IdentityError::RecoveryFailed)?;
    let rotation = CredentialRotation {
        user_id: *user_id,
        auth_verifier: SecretVerifier::new(new_password, kdf, rng),
        password_key: WrappedKey::wrap(&detail_key, new_password.as_bytes(), kdf, rng),
        rotated_at: now,
    };
    let transaction = SignedTransaction::sign(signer, IdentityEvent::RotateCredentials(rotation), now);
    Ok(Recovery {
        session: sessions.issue(*user_id, now, rng),
        transaction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const KDF: KdfParams = KdfParams::new(16);

    fn form() -> RegistrationForm {
        RegistrationForm {
            name: "Asha".into(),
            email: "asha@x.in".into(),
            phone: "+91-9000000001".into(),
            password: "s3cret-pw!".into(),
            role: Role::Farmer,
            recovery: vec![
                ("First school?".into(), "St. Mary".into()),
                ("Village?".into(), "Daurala".into()),
                ("First crop?".into(), "Sugarcane".into()),
            ],
        }
    }

    fn registered() -> (BTreeMap<UserId, UserRecord>, Registration, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut dir = BTreeMap::new();
        let reg = register_user(&dir, &form(), KDF, 1_000, &mut rng).unwrap();
        let Payload::Identity(IdentityEvent::Register(rec)) = reg.transaction.payload.clone() else {
            panic!("registration payload");
        };
        dir.insert(reg.user_id, rec);
        (dir, reg, rng)
    }

    use crate::ledger::Payload;

    #[test]
    fn registration_round_trips_details() {
        let (dir, reg, _) = registered();
        let rec = &dir[&reg.user_id];
        assert_eq!(reg.user_id, reg.keypair.user_id());
        assert_eq!(
            rec.decrypt_details("s3cret-pw!").unwrap(),
            PersonalDetails {
                name: "Asha".into(),
                email: "asha@x.in".into(),
                phone: "+91-9000000001".into(),
            }
        );
        reg.transaction.verify().unwrap();
    }

    #[test]
    fn duplicate_registration_rejected() {
        let (dir, reg, mut rng) = registered();
        let err = register_with_keypair(&dir, reg.keypair.clone(), &form(), KDF, 2_000, &mut rng)
            .unwrap_err();
        assert_eq!(err, IdentityError::AlreadyRegistered(reg.user_id));
    }

    #[test]
    fn form_validation() {
        let dir = BTreeMap::new();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut f = form();
        f.password = "abc".into();
        assert_eq!(
            register_user(&dir, &f, KDF, 0, &mut rng).unwrap_err(),
            IdentityError::WeakPassword
        );
        for bad in ["asha.x.in", "@x.in", "asha@", "a@b@c"] {
            let mut f = form();
            f.email = bad.into();
            assert_eq!(
                register_user(&dir, &f, KDF, 0, &mut rng).unwrap_err(),
                IdentityError::InvalidEmail,
                "{bad}"
            );
        }
        let mut f = form();
        f.recovery.pop();
        assert_eq!(
            register_user(&dir, &f, KDF, 0, &mut rng).unwrap_err(),
            IdentityError::InvalidRecoverySet
        );
    }

    #[test]
    fn login_paths() {
        let (dir, reg, mut rng) = registered();
        let sessions = SessionStore::new(60_000);
        let s = login(&dir, &sessions, &reg.user_id, "s3cret-pw!", 5_000, &mut rng).unwrap();
        assert_eq!(s.expires_at - s.issued_at, 60_000);
        assert_eq!(
            login(&dir, &sessions, &reg.user_id, "wrong-password", 5_000, &mut rng).unwrap_err(),
            IdentityError::BadPassword
        );
        let stranger = Keypair::from_label("stranger").user_id();
        assert_eq!(
            login(&dir, &sessions, &stranger, "s3cret-pw!", 5_000, &mut rng).unwrap_err(),
            IdentityError::UnknownUser
        );
    }

    fn answers(a: &str, b: &str, c: &str) -> [String; 3] {
        [a.into(), b.into(), c.into()]
    }

    #[test]
    fn recovery_rotates_credentials() {
        let (mut dir, reg, mut rng) = registered();
        let sessions = SessionStore::new(60_000);
        let rec = recover_password(
            &dir,
            &sessions,
            &reg.keypair,
            &reg.user_id,
            &answers("  st. MARY ", "daurala", "SUGARCANE"),
            "brand-new-pw",
            KDF,
            9_000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(sessions.validate(&rec.session.session_id, 9_001), Ok(reg.user_id));
        let Payload::Identity(IdentityEvent::RotateCredentials(rot)) = &rec.transaction.payload else {
            panic!("rotation payload");
        };
        dir.get_mut(&reg.user_id).unwrap().apply_rotation(rot);
        let record = &dir[&reg.user_id];
        assert!(record.check_password("brand-new-pw").is_ok());
        assert_eq!(record.check_password("s3cret-pw!"), Err(IdentityError::BadPassword));
        // Details stay readable under the new password.
        assert_eq!(record.decrypt_details("brand-new-pw").unwrap().name, "Asha");
    }

    #[test]
    fn recovery_requires_all_three() {
        let (dir, reg, mut rng) = registered();
        let sessions = SessionStore::new(60_000);
        let err = recover_password(
            &dir,
            &sessions,
            &reg.keypair,
            &reg.user_id,
            &answers("st. mary", "daurala", "wheat"),
            "brand-new-pw",
            KDF,
            9_000,
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(err, IdentityError::RecoveryFailed);
    }

    #[test]
    fn normalization_oracle() {
        // Independent restatement: lowercase then trim, applied to both sides.
        for (enrolled, attempt) in [("Daurala", " dAURALA\t"), ("St. Mary", "ST. MARY")] {
            assert_eq!(enrolled.to_lowercase().trim(), attempt.to_lowercase().trim());
            assert_eq!(normalize_answer(enrolled), normalize_answer(attempt));
        }
        assert_ne!(normalize_answer("st mary"), normalize_answer("st. mary"));
    }

    #[test]
    fn role_parsing_and_chain() {
        assert_eq!("sugar_mill".parse::<Role>(), Ok(Role::SugarMill));
        assert_eq!("Sugar Mill".parse::<Role>(), Ok(Role::SugarMill));
        assert_eq!(Role::Farmer.next_in_chain(), Some(Role::SugarMill));
        assert_eq!(Role::Consumer.next_in_chain(), None);
        assert_eq!(Role::Validator.stage(), None);
        assert!("middleman".parse::<Role>().is_err());
    }
}
